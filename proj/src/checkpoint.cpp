#include "tseg/network/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace tseg::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::Truncated, "checkpoint: truncated file");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

struct Record {
  std::vector<Index> dims;
  std::vector<float> values;
};

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  auto& m = const_cast<Model<float>&>(model);  // state() hands out mutable views; nothing is written
  std::string out(kCheckpointMagic, 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, model.architecture().hash());
  auto record = [&](const std::string& name, const std::vector<Index>& dims, const float* data, Index count) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(data), static_cast<std::size_t>(count) * sizeof(float));
  };
  for (const auto& p : m.state()) record(p.name, p.dims, p.value->data(), p.value->size());
  const float tracked = model.trained() ? 1.0f : 0.0f;
  record("meta.tracked", {1}, &tracked, 1);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Unwritable, "cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::Unwritable, "checkpoint write failed: " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path, std::optional<Architecture> expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::MissingFile, "cannot open checkpoint " + path.string());
  Reader in(std::string(std::istreambuf_iterator<char>(f), {}));

  if (in.str(4) != std::string(kCheckpointMagic, 4)) throw Error(ErrorCode::BadMagic, "checkpoint: bad magic");
  const auto version = in.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::BadVersion, "checkpoint: unsupported version " + std::to_string(version));
  }
  const auto hash = in.get<std::uint64_t>();
  if (expected && expected->hash() != hash) {
    throw Error(ErrorCode::ArchitectureMismatch, "checkpoint architecture does not match " + expected->plan());
  }

  std::map<std::string, Record> records;
  std::string first_name;
  while (!in.done()) {
    const auto name = in.str(in.get<std::uint32_t>());
    Record r;
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorCode::Truncated, "checkpoint: corrupt record header for " + name);
    Index count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.dims.push_back(in.get<std::uint32_t>());
      count *= r.dims.back();
    }
    r.values.resize(static_cast<std::size_t>(count));
    for (auto& v : r.values) v = in.get<float>();
    if (first_name.empty()) first_name = name;
    records[name] = std::move(r);
  }

  const auto e1 = records.find("E1.1.conv.weight");
  if (e1 == records.end() || e1->second.dims.empty()) {
    throw Error(ErrorCode::Truncated, "checkpoint: missing E1.1.conv.weight");
  }
  const Architecture arch{static_cast<int>(e1->second.dims[0])};
  if (arch.hash() != hash) throw Error(ErrorCode::ArchitectureMismatch, "checkpoint: hash does not match its records");

  Model<float> model(arch, 0);
  for (const auto& p : model.state()) {
    const auto it = records.find(p.name);
    if (it == records.end()) throw Error(ErrorCode::Truncated, "checkpoint: missing record " + p.name);
    if (it->second.dims != p.dims) throw Error(ErrorCode::ArchitectureMismatch, "checkpoint: shape mismatch for " + p.name);
    *p.value = Eigen::Map<const Vec<float>>(it->second.values.data(), static_cast<Index>(it->second.values.size()));
  }
  const auto tracked = records.find("meta.tracked");
  if (tracked == records.end() || tracked->second.values.size() != 1) {
    throw Error(ErrorCode::Truncated, "checkpoint: missing meta.tracked");
  }
  model.set_tracked(tracked->second.values[0] != 0.0f);
  return model;
}

}  // namespace tseg::nn
