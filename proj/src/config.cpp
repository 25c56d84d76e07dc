#include "styleinv/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace styleinv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw FormatError("cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("expected true or false, got '" + v + "'");
}

std::string vendors(const std::string& v) {
  if (v.empty()) throw FormatError("empty vendor list");
  for (char c : v)
    if (c < 'A' || c > 'D') throw FormatError("vendors are letters A-D, got '" + v + "'");
  return v;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// `member` is a generic accessor usable on const and mutable configs.
template <typename M>
Field number(M member) {
  return {[member](RunConfig& c, const std::string& v) {
            auto& m = member(c);
            m = parse_number<std::remove_reference_t<decltype(m)>>(v);
          },
          [member](const RunConfig& c) {
            const auto v = member(c);
            if constexpr (std::is_floating_point_v<decltype(v)>)
              return fmt(v);
            else
              return std::to_string(v);
          }};
}

template <typename M>
Field boolean(M member) {
  return {[member](RunConfig& c, const std::string& v) { member(c) = parse_bool(v); },
          [member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"seg.height", number([](auto& c) -> auto& { return c.seg.height; })},
      {"seg.width", number([](auto& c) -> auto& { return c.seg.width; })},
      {"seg.base_channels", number([](auto& c) -> auto& { return c.seg.base_channels; })},
      {"seg.lambda_dice", number([](auto& c) -> auto& { return c.seg.lambda_dice; })},
      {"seg.lr_initial", number([](auto& c) -> auto& { return c.seg.lr_initial; })},
      {"seg.lr_final", number([](auto& c) -> auto& { return c.seg.lr_final; })},
      {"seg.lr_drop_at", number([](auto& c) -> auto& { return c.seg.lr_drop_at; })},
      {"seg.iterations", number([](auto& c) -> auto& { return c.seg.iterations; })},
      {"seg.batch_size", number([](auto& c) -> auto& { return c.seg.batch_size; })},
      {"seg.seed", number([](auto& c) -> auto& { return c.seg.seed; })},
      {"seg.upsample",
       {[](RunConfig& c, const std::string& v) {
          if (v == "nearest")
            c.seg.upsample = UpsampleMode::nearest;
          else if (v == "bilinear")
            c.seg.upsample = UpsampleMode::bilinear;
          else
            throw FormatError("expected nearest or bilinear, got '" + v + "'");
        },
        [](const RunConfig& c) { return std::string(c.seg.upsample == UpsampleMode::nearest ? "nearest" : "bilinear"); }}},
      {"seg.style_unified", boolean([](auto& c) -> auto& { return c.seg.style_unified; })},
      {"aug.probability", number([](auto& c) -> auto& { return c.seg.augment.probability; })},
      {"aug.expand_min_scale", number([](auto& c) -> auto& { return c.seg.augment.expand_min_scale; })},
      {"aug.rotation_jitter_deg",
       number([](auto& c) -> auto& { return c.seg.augment.rotation_jitter_deg; })},
      {"aug.contrast_range", number([](auto& c) -> auto& { return c.seg.augment.contrast_range; })},
      {"aug.brightness_range", number([](auto& c) -> auto& { return c.seg.augment.brightness_range; })},
      {"st.levels", number([](auto& c) -> auto& { return c.st.levels; })},
      {"st.base_channels", number([](auto& c) -> auto& { return c.st.base_channels; })},
      {"st.iterations", number([](auto& c) -> auto& { return c.st.iterations; })},
      {"st.batch_size", number([](auto& c) -> auto& { return c.st.batch_size; })},
      {"st.lr", number([](auto& c) -> auto& { return c.st.lr; })},
      {"st.seed", number([](auto& c) -> auto& { return c.st.seed; })},
      {"st.decoder_instance_norm", boolean([](auto& c) -> auto& { return c.st.decoder_instance_norm; })},
      {"pipeline.top_k", number([](auto& c) -> auto& { return c.pipeline.top_k; })},
      {"pipeline.transforms",
       {[](RunConfig& c, const std::string& v) { c.pipeline.transforms = parse_transforms(v); },
        [](const RunConfig& c) {
          std::string s;
          for (auto t : c.pipeline.transforms) s += (s.empty() ? "" : ",") + transform_name(t);
          return s;
        }}},
      {"pipeline.style_seed",
       number([](auto& c) -> auto& { return c.pipeline.style_seed; })},
      {"pipeline.train_vendors",
       {[](RunConfig& c, const std::string& v) { c.pipeline.train_vendors = vendors(v); },
        [](const RunConfig& c) { return c.pipeline.train_vendors; }}},
      {"pipeline.train_cases", number([](auto& c) -> auto& { return c.pipeline.train_cases; })},
      {"pipeline.test_vendors",
       {[](RunConfig& c, const std::string& v) { c.pipeline.test_vendors = vendors(v); },
        [](const RunConfig& c) { return c.pipeline.test_vendors; }}},
  };
  return f;
}

}  // namespace

void RunConfig::validate() const {
  seg.validate();
  st.validate();
  if (pipeline.top_k < 1) throw Error("config: pipeline.top_k must be >= 1");
  if (pipeline.train_cases < 1) throw Error("config: pipeline.train_cases must be >= 1");
  if (seg.height % (1 << st.levels) != 0 || seg.width % (1 << st.levels) != 0)
    throw Error("config: image size must be divisible by 2^st.levels");
}

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw FormatError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError(where + ": empty key");
    if (kv.count(key)) throw FormatError(where + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

RunConfig config_from_keys(const KeyValues& kv) {
  RunConfig cfg;
  for (const auto& [key, value] : kv) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw FormatError("unknown config key '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const Error& e) {
      throw FormatError("config key '" + key + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_keys(parse_key_values(ss.str(), path.string()));
}

KeyValues config_keys(const RunConfig& cfg) {
  KeyValues kv;
  for (const auto& [key, f] : fields()) kv[key] = f.get(cfg);
  return kv;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : config_keys(cfg)) out += key + " = " + value + "\n";
  return out;
}

}  // namespace styleinv
