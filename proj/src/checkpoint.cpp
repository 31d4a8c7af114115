#include "mtq/checkpoint.hpp"

#include "mtq/errors.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace mtq {

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_same_layout(const nn::ParamStore& expected, const nn::ParamStore& loaded,
                       const std::string& what) {
  if (expected.names() != loaded.names()) {
    throw ShapeError(what + ": parameter names differ from the model built from its config");
  }
  for (const auto& p : expected) {
    const auto& q = loaded.get(p.name);
    if (p.value.shape() != q.value.shape()) {
      throw ShapeError(what + ": parameter " + p.name + " has shape " +
                       shape_string(q.value.shape()) + ", model expects " +
                       shape_string(p.value.shape()));
    }
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& model_config,
                      const nn::ParamStore& params, const nlohmann::json& metadata) {
  nlohmann::json index = nlohmann::json::object();
  std::vector<std::string> order;
  std::size_t offset = 0;
  for (const auto& p : params) {
    index[p.name] = {{"shape", p.value.shape()}, {"offset", offset}};
    order.push_back(p.name);
    offset += p.value.size() * sizeof(double);
  }
  const nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                                 {"model_config", model_config},
                                 {"metadata", metadata},
                                 {"order", order},
                                 {"parameters", index},
                                 {"payload_bytes", offset}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("MTQC", 4);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "MTQC") != 0) {
    throw IoError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 4, sizeof(len));
  if (12 + len > bytes.size()) throw IoError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad header: " + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointFormatVersion) {
    throw IoError(path.string() + ": unsupported checkpoint format version");
  }
  const std::size_t payload = 12 + len;
  const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
  if (payload + payload_bytes != bytes.size()) {
    throw IoError(path.string() + ": payload size does not match header");
  }
  CheckpointContents out;
  out.model_config = header.at("model_config");
  out.metadata = header.value("metadata", nlohmann::json::object());
  for (const auto& name : header.at("order")) {
    const auto& entry = header.at("parameters").at(name.get<std::string>());
    Tensor t(entry.at("shape").get<Shape>());
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + t.size() * sizeof(double) > payload_bytes) {
      throw IoError(path.string() + ": parameter " + name.get<std::string>() + " out of range");
    }
    std::memcpy(t.data(), bytes.data() + payload + offset, t.size() * sizeof(double));
    out.params.add(name.get<std::string>(), std::move(t));
  }
  return out;
}

void save_model(const std::filesystem::path& path, const MtqNet& model,
                const nlohmann::json& metadata) {
  write_checkpoint(path, model.config().to_json(), model.params(), metadata);
}

MtqNet load_model(const std::filesystem::path& path, nlohmann::json* metadata) {
  CheckpointContents c = read_checkpoint(path);
  MtqNet model = MtqNet::build(MtqNetConfig::from_json(c.model_config), 0);
  check_same_layout(model.params(), c.params, path.string());
  for (auto& p : model.params()) p.value = c.params.get(p.name).value;
  if (metadata != nullptr) *metadata = c.metadata;
  return model;
}

void load_weights_into(MtqNet& model, const std::filesystem::path& path) {
  CheckpointContents c = read_checkpoint(path);
  check_same_layout(model.params(), c.params, path.string());
  for (auto& p : model.params()) {
    p.value = c.params.get(p.name).value;
    p.first_moment.fill(0.0);
    p.second_moment.fill(0.0);
    p.grad.fill(0.0);
  }
}

std::string bytes_digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_digest(const std::filesystem::path& path) { return bytes_digest(slurp(path)); }

}  // namespace mtq
