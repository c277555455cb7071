#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "crackseg/config.hpp"
#include "crackseg/network.hpp"
#include "crackseg/optim.hpp"

// Checkpoint layout (little-endian):
//   8 bytes   magic "CRKSEGCK"
//   u32       format version
//   u64       header length L
//   L bytes   JSON header: model config (INI text), full run config, training
//             state and a tensor table {name, dtype, shape, offset, count}
//   ...       raw tensor data, offsets relative to the start of this block

namespace crackseg {

inline constexpr char kCheckpointMagic[8] = {'C', 'R', 'K', 'S', 'E', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingState {
  int epochs_done = 0;
  std::int64_t iterations = 0;
  double best_val_f1 = -1;  // -1: no validation run yet
  int best_epoch = -1;
};

struct CheckpointHeader {
  std::uint32_t version = 0;
  ModelConfig model;
  std::string config_text;
  TrainingState state;
  nlohmann::json tensors;
};

namespace detail {

template <typename U>
const char* dtype_name() {
  if constexpr (std::is_same_v<U, float>) return "f32";
  else return "f64";
}

struct BlobWriter {
  nlohmann::json table = nlohmann::json::array();
  std::vector<char> data;

  template <typename U>
  void add(const std::string& name, const Shape& s, const U* values, std::size_t count) {
    table.push_back({{"name", name},
                     {"dtype", dtype_name<U>()},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"offset", data.size()},
                     {"count", count}});
    const char* p = reinterpret_cast<const char*>(values);
    data.insert(data.end(), p, p + count * sizeof(U));
  }
};

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline std::uint64_t read_uint(std::istream& is, int bytes, const std::string& path) {
  unsigned char b[8] = {};
  if (!is.read(reinterpret_cast<char*>(b), bytes)) throw CheckpointError("truncated checkpoint " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline ModelConfig parse_model_section(const std::string& ini) {
  return parse_config(ini).model;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, CrackSegNet<T>& model, const std::string& config_text = "",
                     const TrainingState& state = {}, Adam<T>* optimizer = nullptr) {
  detail::BlobWriter blob;
  for (const auto& p : model.named_parameters())
    blob.add(p.name, p.param->value.shape(), p.param->value.data(), p.param->value.size());
  for (const auto& b : model.named_buffers()) blob.add(b.name, b.buffer->shape(), b.buffer->data(), b.buffer->size());
  nlohmann::json optim = nullptr;
  if (optimizer) {
    const auto& ps = optimizer->params();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const Shape s = ps[k].param->value.shape();
      blob.add("optim." + ps[k].name + ".m", s, optimizer->first_moment(k).data(), optimizer->first_moment(k).size());
      blob.add("optim." + ps[k].name + ".v", s, optimizer->second_moment(k).data(),
               optimizer->second_moment(k).size());
    }
    optim = {{"steps", optimizer->steps()}};
  }
  const nlohmann::json header = {
      {"format_version", kCheckpointVersion},
      {"model", model_ini(model.config())},
      {"config", config_text},
      {"state",
       {{"epochs_done", state.epochs_done},
        {"iterations", state.iterations},
        {"best_val_f1", state.best_val_f1},
        {"best_epoch", state.best_epoch}}},
      {"optimizer", optim},
      {"tensors", blob.table}};
  const std::string text = header.dump();
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(kCheckpointMagic, 8);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    os.write(blob.data.data(), static_cast<std::streamsize>(blob.data.size()));
    if (!os) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path_);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
      throw CheckpointError("not a checkpoint file: " + path_);
    header_.version = static_cast<std::uint32_t>(detail::read_uint(is, 4, path_));
    if (header_.version != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint format version " + std::to_string(header_.version));
    const std::uint64_t len = detail::read_uint(is, 8, path_);
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("truncated header in " + path_);
    nlohmann::json h;
    try {
      h = nlohmann::json::parse(text);
      header_.model = detail::parse_model_section(h.at("model").get<std::string>());
      header_.config_text = h.at("config").get<std::string>();
      const auto& s = h.at("state");
      header_.state.epochs_done = s.at("epochs_done").get<int>();
      header_.state.iterations = s.at("iterations").get<std::int64_t>();
      header_.state.best_val_f1 = s.at("best_val_f1").get<double>();
      header_.state.best_epoch = s.at("best_epoch").get<int>();
      header_.tensors = h.at("tensors");
      if (!h.at("optimizer").is_null()) optimizer_steps_ = h.at("optimizer").at("steps").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError("malformed checkpoint header in " + path_ + ": " + e.what());
    }
    data_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    for (std::size_t i = 0; i < header_.tensors.size(); ++i) index_[header_.tensors[i].at("name").get<std::string>()] = i;
  }

  const CheckpointHeader& header() const noexcept { return header_; }
  bool has_optimizer_state() const noexcept { return optimizer_steps_ >= 0; }

  template <typename U>
  void read(const std::string& name, const Shape& expect, U* dst, std::size_t count) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw CheckpointError("checkpoint " + path_ + " has no tensor '" + name + "'");
    const auto& t = header_.tensors[it->second];
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (shape.size() != 4 || Shape{shape[0], shape[1], shape[2], shape[3]} != expect)
      throw CheckpointError("tensor '" + name + "' has shape " + t.at("shape").dump() + ", model expects " +
                            expect.str());
    if (t.at("dtype").get<std::string>() != detail::dtype_name<U>())
      throw CheckpointError("tensor '" + name + "' is " + t.at("dtype").get<std::string>() + ", expected " +
                            detail::dtype_name<U>());
    const std::size_t offset = t.at("offset").get<std::size_t>();
    if (t.at("count").get<std::size_t>() != count || offset + count * sizeof(U) > data_.size())
      throw CheckpointError("tensor '" + name + "' is truncated");
    std::memcpy(dst, data_.data() + offset, count * sizeof(U));
  }

  // Loads every parameter and buffer; the stored model config must equal
  // the model's.
  template <typename T>
  void load_into(CrackSegNet<T>& model, Adam<T>* optimizer = nullptr) const {
    if (!(header_.model == model.config()))
      throw ConfigError("checkpoint " + path_ + " was written for a different model configuration:\n" +
                        model_ini(header_.model));
    const auto params = model.named_parameters();
    const auto buffers = model.named_buffers();
    if (params.size() + buffers.size() > header_.tensors.size())
      throw CheckpointError("checkpoint " + path_ + " is missing tensors");
    for (const auto& p : params) read(p.name, p.param->value.shape(), p.param->value.data(), p.param->value.size());
    for (const auto& b : buffers) read(b.name, b.buffer->shape(), b.buffer->data(), b.buffer->size());
    if (optimizer) {
      if (!has_optimizer_state()) throw CheckpointError("checkpoint " + path_ + " has no optimizer state");
      const auto& ps = optimizer->params();
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const Shape s = ps[k].param->value.shape();
        read("optim." + ps[k].name + ".m", s, optimizer->first_moment(k).data(), optimizer->first_moment(k).size());
        read("optim." + ps[k].name + ".v", s, optimizer->second_moment(k).data(), optimizer->second_moment(k).size());
      }
      optimizer->set_steps(optimizer_steps_);
    }
  }

 private:
  std::string path_;
  CheckpointHeader header_;
  std::vector<char> data_;
  std::map<std::string, std::size_t> index_;
  std::int64_t optimizer_steps_ = -1;
};

// Builds a model from the checkpoint's stored configuration and loads it.
template <typename T>
std::unique_ptr<CrackSegNet<T>> load_model(const std::filesystem::path& path) {
  CheckpointReader reader(path);
  auto model = std::make_unique<CrackSegNet<T>>(reader.header().model);
  reader.load_into(*model);
  return model;
}

}  // namespace crackseg
