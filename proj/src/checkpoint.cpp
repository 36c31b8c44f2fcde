#include "hmdn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "hmdn/config.hpp"
#include "hmdn/errors.hpp"

namespace hmdn {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'H', 'M', 'D', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
}

}  // namespace

void save_checkpoint(const Model& model, const Dictionaries& dicts,
                     const std::string& path) {
  json blocks = json::array();
  model.for_each_param([&blocks](const std::string& name, const Matrix& m) {
    blocks.push_back(json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  json header{{"config", train_config_to_json(model.config)},
              {"schema", schema_to_json(model.schema)},
              {"dictionaries", dicts.values},
              {"quantizer_initialized",
               model.quantizer.has_value() && model.quantizer->initialized()},
              {"blocks", std::move(blocks)}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  model.for_each_param([&out](const std::string&, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("'" + path + "' is not a checkpoint file");
  }
  std::uint32_t version = 0;
  read_pod(in, version);
  if (version != kVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  std::uint64_t header_len = 0;
  read_pod(in, header_len);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("truncated checkpoint header in '" + path + "'");

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }

  Checkpoint ckpt{
      Model::create(schema_from_json(header.at("schema")),
                    train_config_from_json(header.at("config"))),
      Dictionaries{header.at("dictionaries").get<std::vector<std::vector<std::string>>>()}};
  if (ckpt.model.quantizer.has_value() &&
      header.at("quantizer_initialized").get<bool>()) {
    ckpt.model.quantizer->allocate_codebooks();
  }

  const json& blocks = header.at("blocks");
  std::size_t index = 0;
  ckpt.model.for_each_param([&](const std::string& name, Matrix& m) {
    if (index >= blocks.size()) {
      throw DataError("checkpoint block table too short at '" + name + "'");
    }
    const json& b = blocks.at(index);
    if (b.at("name").get<std::string>() != name ||
        b.at("rows").get<std::size_t>() != m.rows() ||
        b.at("cols").get<std::size_t>() != m.cols()) {
      throw DataError("checkpoint mismatch at block '" + name + "': file has " +
                      b.at("name").get<std::string>() + " " +
                      std::to_string(b.at("rows").get<std::size_t>()) + "x" +
                      std::to_string(b.at("cols").get<std::size_t>()));
    }
    in.read(reinterpret_cast<char*>(m.data().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    ++index;
  });
  if (index != blocks.size()) {
    throw DataError("checkpoint block table longer than the model census");
  }
  if (!in) throw DataError("truncated checkpoint data in '" + path + "'");
  return ckpt;
}

}  // namespace hmdn
