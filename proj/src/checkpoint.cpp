#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "sdcn/model.hpp"

// Binary layout, host byte order:
//   "SDCNCKPT" u32 version, u32 len + net JSON, training counters,
//   two stores (sdcn, classifier): u32 count, then per tensor
//   u32 len + name, u32 rank, u64 dims[rank], f64 values, f64 velocity,
//   and the trailer "SDCNEND!".
namespace sdcn {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[8] = {'S', 'D', 'C', 'N', 'E', 'N', 'D', '!'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 24)) fail("implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("checkpoint " + path_ + ": " + msg);
  }

 private:
  std::ifstream& in_;
  std::string path_;
};

void write_store(Writer& w, const ParamStore& store) {
  w.pod(static_cast<std::uint32_t>(store.names().size()));
  for (const auto& name : store.names()) {
    const Param& p = store.at(name);
    w.str(name);
    w.pod(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.pod(static_cast<std::uint64_t>(d));
    w.bytes(p.value.data(), p.value.size() * sizeof(double));
    w.bytes(p.velocity.data(), p.velocity.size() * sizeof(double));
  }
}

void read_store(Reader& r, ParamStore& store) {
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) r.fail("implausible rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>()));
    }
    if (shape_size(shape) > (1u << 26)) r.fail("implausible size for " + name);
    Tensor value(shape, 0.0);
    r.bytes(value.data(), value.size() * sizeof(double));
    Param& p = store.add(name, std::move(value));
    r.bytes(p.velocity.data(), p.velocity.size() * sizeof(double));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainingState& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  Writer w(out);
  w.bytes(kMagic, sizeof(kMagic));
  w.pod(kVersion);
  w.str(net_to_json(model.net).dump());
  w.pod(static_cast<std::int32_t>(state.classifier_iter));
  w.pod(static_cast<std::uint8_t>(state.classifier_done ? 1 : 0));
  w.pod(state.classifier_window_sum);
  w.pod(state.classifier_prev_window);
  w.pod(static_cast<std::int32_t>(state.pretrain_iter));
  w.pod(static_cast<std::int32_t>(state.collab_iter));
  write_store(w, model.sdcn);
  write_store(w, model.classifier);
  w.bytes(kTrailer, sizeof(kTrailer));
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, TrainingState* state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) r.fail("bad magic");
  if (r.pod<std::uint32_t>() != kVersion) r.fail("unsupported version");
  Model m;
  m.net = net_from_json(nlohmann::json::parse(r.str()));
  m.proposals = generate_proposals(m.net.image_width, m.net.image_height,
                                   m.net.proposal_scales, m.net.proposal_ratios,
                                   m.net.proposal_stride);
  TrainingState s;
  s.classifier_iter = r.pod<std::int32_t>();
  s.classifier_done = r.pod<std::uint8_t>() != 0;
  s.classifier_window_sum = r.pod<double>();
  s.classifier_prev_window = r.pod<double>();
  s.pretrain_iter = r.pod<std::int32_t>();
  s.collab_iter = r.pod<std::int32_t>();
  read_store(r, m.sdcn);
  read_store(r, m.classifier);
  char trailer[8];
  r.bytes(trailer, sizeof(trailer));
  if (std::memcmp(trailer, kTrailer, sizeof(trailer)) != 0) r.fail("bad trailer");
  if (state) *state = s;
  return m;
}

}  // namespace sdcn
