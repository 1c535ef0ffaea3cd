// DLCK checkpoint layout (little-endian):
//   "DLCK" | u32 version = 1
//   u32 config field count | i32 fields (see kConfigFields order)
//   u32 record count
//   per record: u32 name length | name bytes | u32 rank | u32 dims[rank] | f32 payload
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "deeplight/model.hpp"

namespace dl {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kConfigFields = 10;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError("cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void finish() {
    out_.flush();
    if (!out_) throw FormatError("write to '" + path_.string() + "' failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  }
  void bytes(void* p, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_.string() + ": truncated while reading " + what + " at offset " + std::to_string(offset_));
    }
    offset_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::int32_t i32(const char* what) {
    std::int32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::size_t offset() const { return offset_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

void write_record(Writer& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  std::vector<float> payload(t.data().begin(), t.data().end());
  w.bytes(payload.data(), payload.size() * sizeof(float));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const NamedTensors& extra) {
  const ModelConfig& c = state.config;
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(kConfigFields);
  for (int v : {c.scale_r, c.lr_h, c.lr_w, c.base_channels, c.num_res_blocks, c.num_scales_m, c.dmo_bands,
                c.offset_kernel, c.fusion_resize_divisor, static_cast<int>(c.ablation)}) {
    w.i32(v);
  }
  w.u32(static_cast<std::uint32_t>(state.params().size() + extra.size()));
  for (const auto& [name, t] : state.params()) write_record(w, name, t);
  for (const auto& [name, t] : extra) write_record(w, name, t);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic at offset 0 (expected DLCK)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t fields = r.u32("config field count");
  if (fields != kConfigFields) {
    throw FormatError(path.string() + ": expected " + std::to_string(kConfigFields) + " config fields, found " +
                      std::to_string(fields));
  }
  ModelConfig c;
  for (int* f : {&c.scale_r, &c.lr_h, &c.lr_w, &c.base_channels, &c.num_res_blocks, &c.num_scales_m, &c.dmo_bands,
                 &c.offset_kernel, &c.fusion_resize_divisor}) {
    *f = r.i32("config");
  }
  const std::int32_t ablation = r.i32("config");
  if (ablation < 0 || ablation > static_cast<int>(Ablation::kNoAer)) {
    throw FormatError(path.string() + ": invalid ablation code " + std::to_string(ablation));
  }
  c.ablation = static_cast<Ablation>(ablation);
  c.validate();

  // Reference layout for the stored configuration.
  const ModelState reference = build(c, 0);
  Checkpoint ck;
  ck.model.config = c;

  const std::uint32_t records = r.u32("record count");
  for (std::uint32_t i = 0; i < records; ++i) {
    const std::size_t record_offset = r.offset();
    const std::uint32_t name_len = r.u32("record name length");
    if (name_len > 4096) {
      throw FormatError(path.string() + ": implausible name length at offset " + std::to_string(record_offset));
    }
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "record name");
    const std::uint32_t rank = r.u32("record rank");
    if (rank > 8) throw FormatError(path.string() + ": implausible rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32("record dims"));
    std::vector<float> payload(static_cast<std::size_t>(numel_of(shape)));
    r.bytes(payload.data(), payload.size() * sizeof(float), "record payload");
    std::vector<Scalar> values(payload.begin(), payload.end());

    if (reference.has_param(name)) {
      if (reference.param(name).shape() != shape) {
        throw DimensionError(path.string() + ": parameter '" + name + "' has shape " + shape_str(shape) +
                             " but the stored config requires " + shape_str(reference.param(name).shape()));
      }
      ck.model.add_param(name, Tensor::from(shape, std::move(values), true));
    } else {
      ck.extra.emplace_back(name, Tensor::from(shape, std::move(values)));
    }
  }
  // Keep the canonical parameter order and require completeness.
  ModelState ordered;
  ordered.config = c;
  for (const auto& [name, t] : reference.params()) {
    if (!ck.model.has_param(name)) throw FormatError(path.string() + ": missing parameter '" + name + "'");
    ordered.add_param(name, ck.model.param(name));
  }
  ck.model = std::move(ordered);
  return ck;
}

}  // namespace dl
