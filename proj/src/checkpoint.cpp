#include "opatt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "opatt/error.hpp"

namespace opatt {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const Vocab& vocab,
                     const TrainConfig& config) {
  json arrays = json::array();
  for (const auto& p : model.params()) {
    arrays.push_back({{"name", p.name}, {"shape", {p.value.shape.rows, p.value.shape.cols}}});
  }
  const json manifest = {{"version", kCheckpointVersion},
                         {"config", config},
                         {"seed", config.seed},
                         {"arrays", std::move(arrays)},
                         {"vocab",
                          {{"words", vocab.words()},
                           {"fields", vocab.fields()},
                           {"row_capacity", vocab.row_capacity()}}}};

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out << manifest.dump() << '\n';
    for (const auto& p : model.params()) {
      out.write(reinterpret_cast<const char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.data.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw IoError("checkpoint " + path.string() + " is empty");

  json manifest;
  try {
    manifest = json::parse(header);
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ContractError("unsupported checkpoint version " + std::to_string(version));
    }
    TrainConfig config = manifest.at("config").get<TrainConfig>();
    const auto& v = manifest.at("vocab");
    Vocab vocab(v.at("words").get<std::vector<std::string>>(), v.at("fields").get<std::vector<std::string>>(),
                v.at("row_capacity").get<int>());
    if (vocab.row_capacity() != config.model.row_capacity) {
      throw ContractError("checkpoint vocabulary row capacity differs from its model config");
    }
    Model<float> model(config.model, vocab.size(), vocab.field_count());

    const auto& arrays = manifest.at("arrays");
    if (arrays.size() != model.params().size()) {
      throw ContractError("checkpoint has " + std::to_string(arrays.size()) + " arrays, model expects " +
                          std::to_string(model.params().size()));
    }
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      auto& p = model.params().at(i);
      const auto name = arrays[i].at("name").get<std::string>();
      const auto shape = arrays[i].at("shape").get<std::vector<std::size_t>>();
      if (name != p.name || shape.size() != 2 || Shape{shape[0], shape[1]} != p.value.shape) {
        throw ContractError("checkpoint array " + std::to_string(i) + " (" + name + ") does not match model parameter " +
                            p.name + " " + p.value.shape.str());
      }
      in.read(reinterpret_cast<char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(float)));
      if (!in) throw IoError("checkpoint payload truncated at array " + name);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint has trailing bytes");
    return {std::move(config), std::move(vocab), std::move(model)};
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace opatt
