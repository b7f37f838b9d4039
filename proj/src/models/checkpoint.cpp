#include "uattr/models/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace uattr::models {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::size_t size() const { return bytes_.size(); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1, "header");
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw TruncatedError(std::string("checkpoint truncated while reading ") + what);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

struct Header {
  ModelKind kind;
  TrainingEcho echo;
  double dropout_rate = 0.0;
  std::uint32_t trunk_depth = 0;
};

std::vector<std::uint8_t> encode(const Header& h, const std::vector<const Tensor*>& tensors) {
  Writer w;
  for (char c : {'U', 'A', 'T', 'W'}) w.u8(static_cast<std::uint8_t>(c));
  w.u8(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(h.kind));
  w.u64(h.echo.seed);
  w.u32(h.echo.epochs);
  w.f64(h.echo.learning_rate);
  w.f64(h.dropout_rate);
  w.u32(h.trunk_depth);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) {
    w.u32(static_cast<std::uint32_t>(t->rows()));
    w.u32(static_cast<std::uint32_t>(t->cols()));
  }
  const auto payload_start = w.size();
  for (const auto* t : tensors) {
    for (double v : t->data()) w.f64(v);
  }
  auto& bytes = w.bytes();
  const auto crc = crc32(0L, bytes.data() + payload_start, static_cast<uInt>(bytes.size() - payload_start));
  w.u32(static_cast<std::uint32_t>(crc));
  return std::move(bytes);
}

struct Decoded {
  Header header;
  std::vector<Tensor> tensors;
};

Decoded decode(const std::vector<std::uint8_t>& bytes, ModelKind expected) {
  Reader r(bytes);
  if (bytes.size() < 6 || std::memcmp(bytes.data(), "UATW", 4) != 0) {
    throw VersionMismatchError("not a weight checkpoint (bad magic bytes)");
  }
  for (int i = 0; i < 4; ++i) r.u8();
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("unsupported checkpoint version " + std::to_string(version));
  }
  Decoded d;
  d.header.kind = static_cast<ModelKind>(r.u8());
  if (d.header.kind != expected) throw CheckpointError("checkpoint holds a different model kind");
  d.header.echo.seed = r.u64("training echo");
  d.header.echo.epochs = r.u32("training echo");
  d.header.echo.learning_rate = r.f64("training echo");
  d.header.dropout_rate = r.f64("training echo");
  d.header.trunk_depth = r.u32("training echo");
  const auto count = r.u32("layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = r.u32("layer shapes");
    const auto cols = r.u32("layer shapes");
    if (rows == 0 || cols == 0) throw ShapePayloadError("layer " + std::to_string(i) + " has an empty shape");
    shapes.emplace_back(rows, cols);
    total += static_cast<std::uint64_t>(rows) * cols;
  }
  if (r.remaining() < total * 8 + 4) throw TruncatedError("checkpoint payload is truncated");
  if (r.remaining() > total * 8 + 4) {
    throw ShapePayloadError("checkpoint payload is longer than its declared layer shapes");
  }
  const auto payload_start = r.pos();
  for (auto [rows, cols] : shapes) {
    Tensor t({rows, cols});
    for (auto& v : t.data()) v = r.f64("payload");
    d.tensors.push_back(std::move(t));
  }
  const auto stored_crc = r.u32("crc");
  const auto crc = crc32(0L, bytes.data() + payload_start, static_cast<uInt>(total * 8));
  if (stored_crc != static_cast<std::uint32_t>(crc)) throw CheckpointError("checkpoint payload CRC mismatch");
  return d;
}

void collect(const Mlp& m, std::vector<const Tensor*>& out) {
  for (const auto& l : m.layers()) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
}

Mlp rebuild(const std::vector<Tensor>& tensors, std::size_t& cursor, std::size_t layers, Activation hidden,
            Activation last) {
  if (cursor + 2 * layers > tensors.size()) throw ShapePayloadError("checkpoint has too few layers");
  std::vector<DenseLayer> out;
  for (std::size_t i = 0; i < layers; ++i) {
    DenseLayer l;
    l.weights = tensors[cursor++];
    const Tensor& b = tensors[cursor++];
    if (b.rows() != 1 || b.cols() != l.weights.cols()) throw ShapePayloadError("bias shape disagrees with weights");
    l.bias = b.reshaped({b.cols()});
    l.activation = i + 1 == layers ? last : hidden;
    out.push_back(std::move(l));
  }
  try {
    return Mlp(std::move(out));
  } catch (const std::invalid_argument& e) {
    throw ShapePayloadError(e.what());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Classifier& c, const TrainingEcho& echo) {
  std::vector<const Tensor*> tensors;
  collect(c.network(), tensors);
  return encode(Header{ModelKind::Classifier, echo, c.dropout_rate(), 0}, tensors);
}

std::vector<std::uint8_t> encode_checkpoint(const VaeModel& v, const TrainingEcho& echo) {
  std::vector<const Tensor*> tensors;
  collect(v.trunk(), tensors);
  collect(v.mean_head(), tensors);
  collect(v.log_std_head(), tensors);
  collect(v.decoder(), tensors);
  return encode(Header{ModelKind::Vae, echo, 0.0, static_cast<std::uint32_t>(v.trunk().depth())}, tensors);
}

LoadedClassifier decode_classifier(const std::vector<std::uint8_t>& bytes) {
  auto d = decode(bytes, ModelKind::Classifier);
  if (d.tensors.size() < 2 || d.tensors.size() % 2 != 0) throw ShapePayloadError("classifier layer count is odd");
  std::size_t cursor = 0;
  auto net = rebuild(d.tensors, cursor, d.tensors.size() / 2, Activation::Relu, Activation::Softmax);
  return LoadedClassifier{Classifier(std::move(net), d.header.dropout_rate), d.header.echo};
}

LoadedVae decode_vae(const std::vector<std::uint8_t>& bytes) {
  auto d = decode(bytes, ModelKind::Vae);
  const std::size_t trunk = d.header.trunk_depth;
  if (d.tensors.size() % 2 != 0 || d.tensors.size() / 2 < trunk + 3) {
    throw ShapePayloadError("VAE checkpoint has an inconsistent layer count");
  }
  std::size_t cursor = 0;
  auto t = rebuild(d.tensors, cursor, trunk, Activation::Relu, Activation::Relu);
  auto mu = rebuild(d.tensors, cursor, 1, Activation::Identity, Activation::Identity);
  auto ls = rebuild(d.tensors, cursor, 1, Activation::Identity, Activation::Identity);
  auto dec = rebuild(d.tensors, cursor, (d.tensors.size() - cursor) / 2, Activation::Relu, Activation::Sigmoid);
  try {
    return LoadedVae{VaeModel(std::move(t), std::move(mu), std::move(ls), std::move(dec)), d.header.echo};
  } catch (const std::invalid_argument& e) {
    throw ShapePayloadError(e.what());
  }
}

void save_checkpoint(const Classifier& c, const TrainingEcho& echo, const std::filesystem::path& path) {
  write_file(encode_checkpoint(c, echo), path);
}

void save_checkpoint(const VaeModel& v, const TrainingEcho& echo, const std::filesystem::path& path) {
  write_file(encode_checkpoint(v, echo), path);
}

LoadedClassifier load_classifier(const std::filesystem::path& path) { return decode_classifier(read_file(path)); }

LoadedVae load_vae(const std::filesystem::path& path) { return decode_vae(read_file(path)); }

}  // namespace uattr::models
