#include "genderlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "genderlab/error.hpp"

namespace genderlab {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename S>
constexpr const char* dtype_name() {
  return sizeof(S) == 4 ? "f32" : "f64";
}

template <typename Stored, typename S>
void read_matrix(std::istream& in, Matrix<S>& m, const std::string& path) {
  std::vector<Stored> buf(std::size_t(m.size()));
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(Stored)));
  if (!in) throw IoError("'" + path + "' is truncated");
  for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = S(buf[i]);
}

template <typename Stored, typename S>
void read_all(std::istream& in, std::vector<Matrix<S>>& tensors, const std::string& path) {
  for (auto& t : tensors) read_matrix<Stored>(in, t, path);
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"arch", std::string(arch_name(c.arch))},
          {"vocab_size", c.vocab_size},
          {"d_emb", c.d_emb},
          {"d_hidden", c.d_hidden},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"seq_len", c.seq_len},
          {"dropout", c.dropout},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.arch = parse_arch(j.at("arch").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_emb = j.at("d_emb").get<int>();
    c.d_hidden = j.at("d_hidden").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.seq_len = j.at("seq_len").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad model config in checkpoint: ") + e.what());
  }
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelState<S>& model,
                     const MomentumState<S>* momentum, std::uint64_t step,
                     const nlohmann::json& meta) {
  const bool has_momentum = momentum != nullptr && !momentum->buffers.empty();
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["dtype"] = dtype_name<S>();
  header["config"] = config_to_json(model.config);
  header["step"] = step;
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    header["tensors"].push_back(
        {{"name", model.names[i]}, {"shape", {model.params[i].rows(), model.params[i].cols()}}});
  }
  header["momentum"] = {{"coefficient", momentum ? momentum->momentum : 0.0},
                        {"buffers", has_momentum}};
  header["meta"] = meta;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << kCheckpointVersion << '\n' << text.size() << '\n' << text;
  auto write = [&](const Matrix<S>& m) {
    out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size() * sizeof(S)));
  };
  for (const auto& p : model.params) write(p);
  if (has_momentum) {
    for (const auto& b : momentum->buffers) write(b);
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + p + "'");
  std::string magic, len_line;
  std::getline(in, magic);
  if (magic != kCheckpointVersion) throw IoError("'" + p + "' is not a " + std::string(kCheckpointVersion) + " checkpoint");
  std::getline(in, len_line);
  std::size_t len = 0;
  try {
    len = std::stoull(len_line);
  } catch (const std::exception&) {
    throw IoError("'" + p + "' has a malformed header length");
  }
  std::string text(len, '\0');
  in.read(text.data(), std::streamsize(len));
  if (!in) throw IoError("'" + p + "' is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + p + "' header: " + e.what());
  }

  try {
    Checkpoint<S> ck;
    ck.model = init_model<S>(config_from_json(header.at("config")));
    ck.step = header.value("step", std::uint64_t(0));
    ck.meta = header.value("meta", nlohmann::json::object());
    const auto& tensors = header.at("tensors");
    if (tensors.size() != ck.model.params.size()) {
      throw IoError("'" + p + "' tensor list does not match its config");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& t = tensors[i];
      const auto& m = ck.model.params[i];
      if (t.at("name").get<std::string>() != ck.model.names[i] ||
          t.at("shape")[0].get<Eigen::Index>() != m.rows() ||
          t.at("shape")[1].get<Eigen::Index>() != m.cols()) {
        throw IoError("'" + p + "' tensor " + std::to_string(i) + " does not match its config");
      }
    }
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != "f32" && dtype != "f64") throw IoError("'" + p + "' has unknown dtype " + dtype);
    const bool f32 = dtype == "f32";
    auto read = [&](std::vector<Matrix<S>>& ts) {
      if (f32) {
        read_all<float>(in, ts, p);
      } else {
        read_all<double>(in, ts, p);
      }
    };
    read(ck.model.params);
    ck.momentum.momentum = header.at("momentum").value("coefficient", 0.0);
    if (header.at("momentum").value("buffers", false)) {
      for (const auto& m : ck.model.params) {
        ck.momentum.buffers.push_back(Matrix<S>::Zero(m.rows(), m.cols()));
      }
      read(ck.momentum.buffers);
    }
    if (!ck.model.all_finite()) throw IoError("'" + p + "' contains non-finite parameters");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + p + "' header: " + e.what());
  }
}

template void save_checkpoint(const std::filesystem::path&, const ModelState<float>&,
                              const MomentumState<float>*, std::uint64_t, const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, const ModelState<double>&,
                              const MomentumState<double>*, std::uint64_t, const nlohmann::json&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace genderlab
