#include "cdcn/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "cdcn/errors.hpp"

namespace cdcn {

namespace {

constexpr const char* kMagic = "CDCN1";

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ArtifactMismatch("checkpoint truncated while reading " + what);
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("bad integer for " + key + ": '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("bad number for " + key + ": '" + value + "'");
}

}  // namespace

std::string format_model_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "num_groups=" << cfg.num_groups << " blocks_per_group=" << cfg.blocks_per_group
     << " channels=" << cfg.channels << " scale=" << cfg.scale
     << " leaky_slope=" << cfg.leaky_slope << " ca_reduction=" << cfg.ca_reduction
     << " ablation=" << to_string(cfg.ablation);
  return os.str();
}

ModelConfig parse_model_config(const std::string& line) {
  ModelConfig cfg;
  std::istringstream is(line);
  std::string token;
  std::set<std::string> seen;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ValidationError("bad config token '" + token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (!seen.insert(key).second) throw ValidationError("duplicate model config key '" + key + "'");
    if (key == "num_groups") cfg.num_groups = parse_int(key, value);
    else if (key == "blocks_per_group") cfg.blocks_per_group = parse_int(key, value);
    else if (key == "channels") cfg.channels = parse_int(key, value);
    else if (key == "scale") cfg.scale = parse_int(key, value);
    else if (key == "leaky_slope") cfg.leaky_slope = parse_double(key, value);
    else if (key == "ca_reduction") cfg.ca_reduction = parse_int(key, value);
    else if (key == "ablation") cfg.ablation = parse_ablation(value);
    else throw ValidationError("unknown model config key '" + key + "'");
  }
  if (seen.size() != 7) throw ValidationError("model config line is missing keys: '" + line + "'");
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << kMagic << '\n' << format_model_config(params.config()) << '\n';
  put<std::uint64_t>(os, params.size());
  std::vector<float> buffer;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.spec(i).name;
    const nn::Tensor& t = params.tensor(i);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    for (int d : {t.shape().n, t.shape().c, t.shape().h, t.shape().w}) put<std::int32_t>(os, d);
    buffer.assign(t.values().begin(), t.values().end());
    os.write(reinterpret_cast<const char*>(buffer.data()),
             static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactMismatch("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != kMagic) throw ArtifactMismatch(path.string() + " is not a CDCN1 checkpoint");
  std::string header;
  std::getline(is, header);
  ModelConfig cfg;
  try {
    cfg = parse_model_config(header);
  } catch (const ValidationError& e) {
    throw ArtifactMismatch("checkpoint header: " + std::string(e.what()));
  }
  ModelParams params = ModelParams::zeros(cfg);
  const auto count = get<std::uint64_t>(is, "tensor count");
  if (count != params.size()) throw ArtifactMismatch("checkpoint tensor count does not match its config");
  std::vector<float> buffer;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get<std::uint32_t>(is, "name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    nn::Shape shape;
    shape.n = get<std::int32_t>(is, "shape");
    shape.c = get<std::int32_t>(is, "shape");
    shape.h = get<std::int32_t>(is, "shape");
    shape.w = get<std::int32_t>(is, "shape");
    if (!params.contains(name)) throw ArtifactMismatch("unexpected tensor '" + name + "' in checkpoint");
    nn::Tensor& t = params[name];
    if (!(t.shape() == shape)) throw ArtifactMismatch("shape mismatch for '" + name + "'");
    buffer.resize(t.numel());
    is.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    if (!is) throw ArtifactMismatch("checkpoint truncated in '" + name + "'");
    std::copy(buffer.begin(), buffer.end(), t.values().begin());
  }
  return params;
}

}  // namespace cdcn
