#include "great/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "great/version.hpp"
#include "json.hpp"

namespace great {

using nlohmann::json;

namespace {

json mlp_json(const MlpSpec& spec) {
  json acts = json::array();
  for (auto a : spec.activations) acts.push_back(activation_name(a));
  return {{"widths", spec.widths}, {"activations", acts}, {"output_activation", "identity"}};
}

void put(json& params, const ParamSet& set) {
  for (const auto& [name, t] : set) {
    params[name] = {{"shape", t.shape()}, {"data", t.storage()}};
  }
}

ParamSet take(const json& params, const std::string& prefix, bool predictor) {
  ParamSet out;
  for (auto it = params.begin(); it != params.end(); ++it) {
    const std::string& name = it.key();
    const bool match = predictor ? (name.rfind("lstm.", 0) == 0 || name.rfind("head.", 0) == 0)
                                 : name.rfind(prefix, 0) == 0;
    if (!match) continue;
    Shape shape = it.value().at("shape").get<Shape>();
    std::vector<double> data = it.value().at("data").get<std::vector<double>>();
    if (shape_size(shape) != data.size()) {
      throw std::invalid_argument("checkpoint parameter '" + name + "': shape " + shape_string(shape) +
                                  " does not match " + std::to_string(data.size()) + " values");
    }
    out.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  json header = {
      {"format", "great-checkpoint"},
      {"version", ckpt.version.empty() ? kFrameworkVersion : ckpt.version},
      {"seed", ckpt.seed},
      {"lstm", {{"input_dim", ckpt.dims.input_dim}, {"hidden_dim", ckpt.dims.hidden_dim},
                {"num_layers", ckpt.dims.num_layers}}},
      {"transform_width", ckpt.dims.transform_width},
      {"g_input", mlp_json(ckpt.dims.input_transform())},
      {"g_hidden", mlp_json(ckpt.dims.hidden_transform())},
  };
  json params = json::object();
  put(params, ckpt.predictor);
  put(params, ckpt.transforms.input);
  put(params, ckpt.transforms.hidden);
  put(params, ckpt.transforms.input_rec);
  put(params, ckpt.transforms.hidden_rec);
  return json{{"header", header}, {"params", params}}.dump(1);
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    const json& h = doc.at("header");
    if (h.at("format") != "great-checkpoint") throw std::invalid_argument("not a checkpoint document");
    Checkpoint c;
    c.version = h.at("version").get<std::string>();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.dims.input_dim = h.at("lstm").at("input_dim").get<std::size_t>();
    c.dims.hidden_dim = h.at("lstm").at("hidden_dim").get<std::size_t>();
    c.dims.num_layers = h.at("lstm").at("num_layers").get<std::size_t>();
    c.dims.transform_width = h.at("transform_width").get<std::size_t>();
    const json& params = doc.at("params");
    c.predictor = take(params, "", true);
    c.transforms.input = take(params, kInputTransformPrefix, false);
    c.transforms.hidden = take(params, kHiddenTransformPrefix, false);
    c.transforms.input_rec = take(params, kInputRecPrefix, false);
    c.transforms.hidden_rec = take(params, kHiddenRecPrefix, false);
    validate_predictor(c.dims, c.predictor);
    validate_transforms(c.dims, c.transforms);
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(ckpt) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace great
