#include "wavernn/model_io.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "wavernn/errors.h"

namespace wavernn {

namespace {

constexpr char kMagic[4] = {'W', 'R', 'N', 'N'};
constexpr std::uint32_t kHasSubscale = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void size(std::size_t v, const char* what) {
    if (v > 0xffffffffu) throw InputError(std::string(what) + " too large to store");
    u32(static_cast<std::uint32_t>(v));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void str(const std::string& s) {
    size(s.size(), "name");
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > in_.size() - pos_) {
      throw FormatError(std::string("model file truncated reading ") + what +
                        " at byte " + std::to_string(pos_));
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::uint16_t u16(const char* what) {
    auto b = take(2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint64_t u64(const char* what) {
    auto b = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    auto b = take(n, what);
    return std::string(b.begin(), b.end());
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t offset() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

// One named tensor: either dense 32-bit or block-sparse 16-bit.
struct Record {
  std::string name;
  WeightMatrix matrix;
};

void write_record(Writer& w, const std::string& name, const WeightMatrix& m) {
  w.str(name);
  w.size(m.rows(), "rows");
  w.size(m.cols(), "cols");
  if (m.is_sparse()) {
    const BlockSparseMatrix& s = m.sparse();
    const SparsityMask mask = s.mask();
    w.u8(16);
    w.u8(static_cast<std::uint8_t>(s.block_shape().rows));
    w.u8(static_cast<std::uint8_t>(s.block_shape().cols));
    w.u8(1);
    w.size(mask.packed().size(), "mask");
    w.bytes(mask.packed());
    w.u64(s.values().size());
    for (std::uint16_t v : s.values()) w.u16(v);
  } else {
    const DenseMatrix& d = m.dense();
    w.u8(32);
    w.u8(1);
    w.u8(1);
    w.u8(0);
    w.u64(d.values().size());
    for (float v : d.values()) w.f32(v);
  }
}

Record read_record(Reader& r) {
  Record rec;
  rec.name = r.str("tensor name");
  const std::size_t rows = r.u32("tensor rows");
  const std::size_t cols = r.u32("tensor cols");
  const unsigned width = r.u8("tensor width");
  const BlockShape shape{r.u8("block rows"), r.u8("block cols")};
  const bool masked = r.u8("mask flag") != 0;
  const auto fail = [&](const std::string& why) {
    return FormatError("tensor " + rec.name + ": " + why);
  };
  if (width != 16 && width != 32) throw fail("unsupported width " + std::to_string(width));
  if (masked != (width == 16)) throw fail("only 16-bit tensors carry masks");
  if (!masked) {
    const std::uint64_t n = r.u64("value count");
    if (n != std::uint64_t{rows} * cols) throw fail("value count does not match shape");
    if (n * 4 > r.remaining()) throw fail("values truncated");
    std::vector<float> values(n);
    for (float& v : values) v = r.f32("values");
    rec.matrix = WeightMatrix(DenseMatrix(rows, cols, std::move(values)));
    return rec;
  }
  const std::uint32_t mask_bytes = r.u32("mask size");
  auto packed = r.take(mask_bytes, "mask");
  try {
    SparsityMask mask = SparsityMask::from_packed(
        rows, cols, shape, std::vector<std::uint8_t>(packed.begin(), packed.end()));
    const std::uint64_t n = r.u64("value count");
    if (n != mask.retained_weights()) {
      throw fail("value count " + std::to_string(n) + " does not match the mask (" +
                 std::to_string(mask.retained_weights()) + ")");
    }
    if (n * 2 > r.remaining()) throw fail("values truncated");
    std::vector<std::uint16_t> values(n);
    for (auto& v : values) v = r.u16("values");
    std::vector<std::uint32_t> starts{0};
    std::vector<std::uint32_t> block_cols;
    for (std::size_t br = 0; br < mask.block_rows(); ++br) {
      for (std::size_t bc = 0; bc < mask.block_cols(); ++bc) {
        if (mask.block(br, bc)) block_cols.push_back(static_cast<std::uint32_t>(bc));
      }
      starts.push_back(static_cast<std::uint32_t>(block_cols.size()));
    }
    rec.matrix = WeightMatrix(BlockSparseMatrix(rows, cols, shape, std::move(starts),
                                                std::move(block_cols), std::move(values)));
  } catch (const InputError& e) {
    throw fail(e.what());
  }
  return rec;
}

// Every tensor of the model in file order.
std::vector<std::pair<std::string, WeightMatrix>> model_records(const Model& m) {
  std::vector<std::pair<std::string, WeightMatrix>> out;
  const auto column = [](std::span<const float> v) {
    return WeightMatrix(DenseMatrix(v.size(), 1, std::vector<float>(v.begin(), v.end())));
  };
  out.emplace_back("recurrent", m.cell.recurrent);
  out.emplace_back("input", WeightMatrix(m.cell.input));
  out.emplace_back("gate_bias", column(m.cell.gate_bias));
  for (std::size_t p = 0; p < m.cell.heads.size(); ++p) {
    const std::string prefix = "head" + std::to_string(p) + ".";
    const InferenceHead& h = m.cell.heads[p];
    out.emplace_back(prefix + "hidden", h.hidden);
    out.emplace_back(prefix + "hidden_bias", column(h.hidden_bias));
    out.emplace_back(prefix + "logits", h.logits);
    out.emplace_back(prefix + "logits_bias", column(h.logits_bias));
  }
  if (m.subscale) {
    for (const auto& [name, t] : m.cond_net.tensors()) {
      out.emplace_back(name, WeightMatrix(*t));
    }
  }
  return out;
}

std::vector<float> as_column(const WeightMatrix& w, const std::string& name) {
  if (w.is_sparse() || w.cols() != 1) {
    throw FormatError("tensor " + name + " must be a dense column");
  }
  const auto v = w.dense().values();
  return std::vector<float>(v.begin(), v.end());
}

}  // namespace

Model Model::from_subscale(const SubscaleModel& s) {
  return {s.cell, s.config, s.net};
}

SubscaleModel Model::to_subscale() const {
  if (!subscale) throw InputError("model has no subscale section");
  SubscaleModel s{*subscale, cell, cond_net};
  s.validate();
  return s;
}

void Model::validate() const {
  cell.validate();
  if (subscale) to_subscale();
}

std::vector<std::uint8_t> serialize_model(const Model& m) {
  m.validate();
  Writer w;
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u32(kModelFormatVersion);
  const CellConfig& c = m.cell.config;
  w.u32(static_cast<std::uint32_t>(c.kind));
  w.size(c.state_size, "state size");
  w.size(c.input_dim(), "input dim");
  w.size(c.cond_dim, "cond dim");
  w.size(c.proj_width, "head width");
  w.u32(m.subscale ? kHasSubscale : 0);
  if (m.subscale) {
    w.size(m.subscale->batch_factor, "batch factor");
    w.size(m.subscale->horizon, "horizon");
    w.size(m.subscale->lookahead, "lookahead");
    const CondNetConfig& n = m.cond_net.config();
    w.size(n.input_channels, "channels");
    w.size(n.residual_channels, "channels");
    w.size(n.conv_channels, "channels");
    w.size(n.kernel, "kernel");
    w.size(n.dilations.size(), "layers");
    for (std::size_t d : n.dilations) w.size(d, "dilation");
  }
  const auto records = model_records(m);
  w.size(records.size(), "tensor count");
  for (const auto& [name, t] : records) write_record(w, name, t);
  return w.take();
}

Model parse_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError("not a model file (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  const std::uint32_t kind = r.u32("cell kind");
  if (kind > 1) throw FormatError("unknown cell kind " + std::to_string(kind));
  CellConfig c;
  c.kind = static_cast<CellKind>(kind);
  c.state_size = r.u32("state size");
  const std::size_t input_dim = r.u32("input dim");
  c.cond_dim = r.u32("cond dim");
  c.proj_width = r.u32("head width");
  try {
    c.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid cell config: ") + e.what());
  }
  if (c.input_dim() != input_dim) {
    throw FormatError("input dim " + std::to_string(input_dim) +
                      " does not match the cell config");
  }
  const std::uint32_t flags = r.u32("flags");
  if (flags & ~kHasSubscale) throw FormatError("unknown flags");

  Model m;
  CondNetConfig net_cfg;
  if (flags & kHasSubscale) {
    SubscaleConfig s;
    s.batch_factor = r.u32("batch factor");
    s.horizon = r.u32("horizon");
    s.lookahead = r.u32("lookahead");
    net_cfg.input_channels = r.u32("channels");
    net_cfg.residual_channels = r.u32("channels");
    net_cfg.conv_channels = r.u32("channels");
    net_cfg.kernel = r.u32("kernel");
    const std::uint32_t layers = r.u32("layers");
    if (layers > 4096) throw FormatError("implausible layer count");
    net_cfg.dilations.resize(layers);
    for (auto& d : net_cfg.dilations) d = r.u32("dilation");
    m.subscale = s;
    try {
      m.cond_net = CondNet(net_cfg);
    } catch (const InputError& e) {
      throw FormatError(std::string("invalid conditioning net: ") + e.what());
    }
  }

  const std::uint32_t count = r.u32("tensor count");
  std::map<std::string, WeightMatrix> found;
  for (std::uint32_t k = 0; k < count; ++k) {
    Record rec = read_record(r);
    if (!found.emplace(rec.name, std::move(rec.matrix)).second) {
      throw FormatError("duplicate tensor " + rec.name);
    }
  }
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after tensor " + std::to_string(count));
  }

  const auto get = [&](const std::string& name) -> WeightMatrix {
    auto it = found.find(name);
    if (it == found.end()) throw FormatError("missing tensor " + name);
    WeightMatrix w = std::move(it->second);
    found.erase(it);
    return w;
  };
  m.cell.config = c;
  m.cell.recurrent = get("recurrent");
  {
    WeightMatrix in = get("input");
    if (in.is_sparse()) throw FormatError("tensor input must be dense");
    m.cell.input = in.dense();
  }
  m.cell.gate_bias = as_column(get("gate_bias"), "gate_bias");
  for (std::size_t p = 0; p < c.parts(); ++p) {
    const std::string prefix = "head" + std::to_string(p) + ".";
    InferenceHead h;
    h.hidden = get(prefix + "hidden");
    h.hidden_bias = as_column(get(prefix + "hidden_bias"), prefix + "hidden_bias");
    h.logits = get(prefix + "logits");
    h.logits_bias = as_column(get(prefix + "logits_bias"), prefix + "logits_bias");
    m.cell.heads.push_back(std::move(h));
  }
  if (m.subscale) {
    for (auto& [name, t] : m.cond_net.tensors()) {
      WeightMatrix w = get(name);
      if (w.is_sparse()) throw FormatError("tensor " + name + " must be dense");
      if (w.rows() != t->rows() || w.cols() != t->cols()) {
        throw FormatError("tensor " + name + " has the wrong shape");
      }
      *t = w.dense();
    }
  }
  if (!found.empty()) throw FormatError("unexpected tensor " + found.begin()->first);
  try {
    m.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what());
  }
  return m;
}

void save_model(const Model& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot move model into place at " + path + ": " + ec.message());
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_model(bytes);
}

std::vector<TensorInfo> model_tensor_info(const Model& m) {
  std::vector<TensorInfo> out;
  for (const auto& [name, t] : model_records(m)) {
    TensorInfo info{name, t.rows(), t.cols()};
    if (t.is_sparse()) {
      info.width = 16;
      info.block = t.sparse().block_shape();
      info.masked = true;
      info.stored_values = t.sparse().nnz();
      info.mask_bits = mask_overhead_bits(t.sparse().mask());
    } else {
      info.block = kBlock1x1;
      info.stored_values = t.rows() * t.cols();
    }
    out.push_back(info);
  }
  return out;
}

namespace {

SparsityMask mask_of(const WeightMatrix& w) {
  if (w.is_sparse()) return w.sparse().mask();
  return SparsityMask(w.rows(), w.cols(), kBlock1x1);
}

}  // namespace

std::optional<CellMasks> storage_masks(const CellParams& p) {
  bool any = p.recurrent.is_sparse();
  for (const auto& h : p.heads) any = any || h.hidden.is_sparse() || h.logits.is_sparse();
  if (!any) return std::nullopt;
  CellMasks masks;
  const std::size_t h = p.config.state_size;
  const SparsityMask stacked = mask_of(p.recurrent);
  const BlockShape shape = stacked.block_shape();
  for (std::size_t g = 0; g < 3; ++g) {
    SparsityMask gate(h, h, shape);
    const std::size_t offset = g * gate.block_rows();
    for (std::size_t br = 0; br < gate.block_rows(); ++br) {
      for (std::size_t bc = 0; bc < gate.block_cols(); ++bc) {
        gate.set_block(br, bc, stacked.block(offset + br, bc));
      }
    }
    masks.gates.push_back(std::move(gate));
  }
  for (const auto& head : p.heads) {
    masks.hidden.push_back(mask_of(head.hidden));
    masks.logits.push_back(mask_of(head.logits));
  }
  return masks;
}

SparsityReport model_sparsity_report(const Model& m) {
  const auto masks = storage_masks(m.cell);
  return sparsity_report(m.cell.config, m.cell.tensors(),
                         masks ? &*masks : nullptr);
}

}  // namespace wavernn
