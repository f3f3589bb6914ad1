#include <bit>
#include <cstring>

#include "json.hpp"
#include "neuroalign/model.hpp"

namespace neuroalign {

namespace {

constexpr std::string_view kMagic = "NALCKPT1";

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},     {"d_model", c.d_model},
          {"d_ff", c.d_ff},         {"vocab_size", c.vocab_size}, {"max_len", c.max_len},
          {"tied_output", c.tied_output}, {"dropout", c.dropout}, {"init_std", c.init_std}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.tied_output = j.at("tied_output").get<bool>();
  c.dropout = j.value("dropout", 0.0);
  c.init_std = j.value("init_std", 0.02);
  c.validate();
  return c;
}

void append_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TransformerParams& params,
                     const ModelConfig& config, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["format"] = "neuroalign-checkpoint";
  header["version"] = 1;
  header["config"] = config_to_json(config);
  header["vocab_hash"] = meta.vocab_hash;
  header["step"] = meta.step;
  nlohmann::json blocks = nlohmann::json::array();
  params.visit([&](const std::string& name, const auto& block) {
    blocks.push_back({{"name", name}, {"shape", {block.rows(), block.cols()}}});
  });
  header["blocks"] = std::move(blocks);
  const std::string header_text = header.dump();

  std::string out(kMagic);
  append_u64(out, header_text.size());
  out += header_text;
  params.visit([&](const std::string&, const auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      for (Eigen::Index c = 0; c < block.cols(); ++c) {
        const float f = static_cast<float>(block(r, c));
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.append(buf, 4);
      }
    }
  });
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  if (data.size() < kMagic.size() + 8 || std::string_view(data).substr(0, kMagic.size()) != kMagic)
    throw ParseError("not a checkpoint file: " + path.string());
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, data.data() + kMagic.size(), 8);
  std::size_t offset = kMagic.size() + 8;
  if (header_len > data.size() - offset) throw ParseError("truncated checkpoint header");
  Checkpoint ck;
  try {
    auto header = nlohmann::json::parse(data.substr(offset, header_len));
    ck.config = config_from_json(header.at("config"));
    ck.meta.vocab_hash = header.value("vocab_hash", "");
    ck.meta.step = header.value("step", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
  offset += header_len;
  ck.params = TransformerParams::zeros(ck.config);
  ck.params.visit([&](const std::string& name, auto& block) {
    const std::size_t bytes = static_cast<std::size_t>(block.size()) * 4;
    if (data.size() - offset < bytes) throw ParseError("truncated checkpoint block " + name);
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      for (Eigen::Index c = 0; c < block.cols(); ++c) {
        float f;
        std::memcpy(&f, data.data() + offset, 4);
        block(r, c) = f;
        offset += 4;
      }
    }
  });
  if (offset != data.size()) throw ParseError("trailing bytes after checkpoint parameters");
  return ck;
}

}  // namespace neuroalign
