#include "vaut/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "vaut/serialize.hpp"

namespace vaut {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& path, const AUDetector<float>& model, const RunConfig& config) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  const auto params = model.parameters();
  os << "VAUTCKPT " << kCheckpointVersion << "\nconfig\n" << serialize_config(config);
  os << "params " << params.size() << "\n";
  for (const auto& p : params) {
    os << p.name << " " << shape_str(p.tensor.shape()) << " " << (p.tensor.requires_grad() ? 0 : 1) << "\n";
  }
  os << "end\n";
  for (const auto& p : params) write_tensor(os, p.tensor);
  if (!os) throw IoError("write failed for checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  std::size_t row = 0;
  const auto fail = [&](const std::string& why) {
    return ParseError(path.string() + ":" + std::to_string(row) + ": " + why);
  };
  std::string line;
  const auto next = [&]() {
    if (!std::getline(is, line)) throw fail("unexpected end of header");
    ++row;
    return line;
  };
  if (next() != "VAUTCKPT " + std::to_string(kCheckpointVersion)) throw fail("not a version-1 checkpoint");
  if (next() != "config") throw fail("expected 'config'");

  std::string config_text;
  while (next().rfind("params ", 0) != 0) config_text += line + "\n";
  RunConfig config;
  try {
    config = parse_config(config_text, path.string() + " config section");
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
  std::size_t count = 0;
  try {
    count = std::stoul(line.substr(7));
  } catch (const std::exception&) {
    throw fail("bad parameter count");
  }

  Rng rng(config.train.seed);
  LoadedCheckpoint out{config, std::make_unique<AUDetector<float>>(config.model, rng)};
  auto params = out.model->parameters();
  if (params.size() != count) {
    throw fail("checkpoint lists " + std::to_string(count) + " parameters, model has " +
               std::to_string(params.size()));
  }
  std::vector<bool> frozen(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream fields(next());
    std::string name, shape;
    int flag = -1;
    if (!(fields >> name >> shape >> flag) || (flag != 0 && flag != 1)) throw fail("malformed manifest line");
    if (name != params[i].name) throw fail("expected parameter " + params[i].name + ", found " + name);
    if (shape != shape_str(params[i].tensor.shape())) {
      throw fail(name + " has shape " + shape + ", model expects " + shape_str(params[i].tensor.shape()));
    }
    frozen[i] = flag == 1;
  }
  if (next() != "end") throw fail("expected 'end'");

  for (std::size_t i = 0; i < count; ++i) {
    Tensor<float> stored;
    try {
      stored = read_tensor<float>(is);
    } catch (const Error& e) {
      throw ParseError(path.string() + ": tensor for " + params[i].name + ": " + e.what());
    }
    if (stored.shape() != params[i].tensor.shape()) {
      throw ParseError(path.string() + ": tensor for " + params[i].name + " has shape " +
                       shape_str(stored.shape()));
    }
    auto dst = params[i].tensor.mutable_values();
    std::copy(stored.values().begin(), stored.values().end(), dst.begin());
    params[i].tensor.set_requires_grad(!frozen[i]);
  }
  return out;
}

}  // namespace vaut
