#include "tailnet/checkpoint.hpp"

#include <cstring>

#include "tailnet/binio.hpp"

namespace tailnet {

void TrainConfig::validate() const {
  if (d < 1) throw UserError("embedding width must be positive");
  if (!(learning_rate > 0)) throw UserError("learning rate must be positive");
  if (batch_size < 1) throw UserError("batch size must be positive");
  if (epochs < 0) throw UserError("epoch count cannot be negative");
  if (l2 < 0) throw UserError("weight decay cannot be negative");
  if (early_stop_patience < 1) throw UserError("early-stop patience must be positive");
}

namespace {

constexpr char kMagic[4] = {'T', 'L', 'N', 'T'};
constexpr uint16_t kVersion = 1;

void write_section(BinWriter& w, const BinWriter& section) {
  w.u32(static_cast<uint32_t>(section.buffer().size()));
  w.bytes(section.buffer().data(), section.buffer().size());
}

BinReader read_section(BinReader& r, const char* name) {
  const uint32_t len = r.u32();
  const uint8_t* p = r.take(len);
  return BinReader(p, len, std::string("checkpoint ") + name + " section");
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  cp.config.validate();
  cp.params.validate();
  if (cp.catalog.size() != cp.params.n_items)
    throw UsageError("checkpoint catalog and model disagree on item count");

  BinWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);

  BinWriter config;
  config.u32(static_cast<uint32_t>(cp.config.d));
  config.f64(cp.config.learning_rate);
  config.u32(static_cast<uint32_t>(cp.config.batch_size));
  config.u32(static_cast<uint32_t>(cp.config.epochs));
  config.f64(cp.config.l2);
  config.u64(cp.config.seed);
  config.u8(cp.config.use_pm ? 1 : 0);
  config.u32(static_cast<uint32_t>(cp.config.early_stop_patience));
  write_section(w, config);

  BinWriter catalog;
  catalog.u32(static_cast<uint32_t>(cp.catalog.size()));
  catalog.f64(cp.catalog.head_fraction());
  for (int32_t i = 0; i < cp.catalog.size(); ++i) {
    catalog.str(cp.catalog.id_of(i));
    catalog.u64(static_cast<uint64_t>(cp.catalog.click_count(i)));
    catalog.u8(cp.catalog.is_tail(i) ? 1 : 0);
  }
  write_section(w, catalog);

  BinWriter tensors;
  tensors.u32(static_cast<uint32_t>(cp.params.n_items));
  tensors.u32(static_cast<uint32_t>(cp.params.d));
  for (const Tensor* t : cp.params.tensors()) {
    tensors.u32(static_cast<uint32_t>(t->rows()));
    tensors.u32(static_cast<uint32_t>(t->cols()));
    for (int64_t i = 0; i < t->size(); ++i) tensors.f64((*t)[i]);
  }
  write_section(w, tensors);

  BinWriter meta;
  meta.f64(cp.best_valid_mrr);
  meta.u32(static_cast<uint32_t>(cp.best_epoch));
  write_section(w, meta);

  write_file_bytes(path, w.buffer());
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  BinReader r(bytes.data(), bytes.size(), "checkpoint file");

  const uint8_t* magic = r.take(4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint file: bad magic bytes (not a model checkpoint)");
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError("checkpoint file: unsupported format version " + std::to_string(version));

  Checkpoint cp;

  BinReader config = read_section(r, "config");
  cp.config.d = static_cast<int32_t>(config.u32());
  cp.config.learning_rate = config.f64();
  cp.config.batch_size = static_cast<int32_t>(config.u32());
  cp.config.epochs = static_cast<int32_t>(config.u32());
  cp.config.l2 = config.f64();
  cp.config.seed = config.u64();
  cp.config.use_pm = config.u8() != 0;
  cp.config.early_stop_patience = static_cast<int32_t>(config.u32());
  config.expect_end();

  BinReader catalog = read_section(r, "catalog");
  const uint32_t n_items = catalog.u32();
  const double head_fraction = catalog.f64();
  // Each item occupies at least 11 bytes (length prefix, count, flag).
  if (n_items > catalog.remaining() / 11)
    throw FormatError("checkpoint file: catalog section too short for declared item count");
  std::vector<std::string> ids(n_items);
  std::vector<int64_t> counts(n_items);
  std::vector<uint8_t> tail(n_items);
  for (uint32_t i = 0; i < n_items; ++i) {
    ids[i] = catalog.str();
    counts[i] = static_cast<int64_t>(catalog.u64());
    tail[i] = catalog.u8();
    if (tail[i] > 1) throw FormatError("checkpoint file: tail flag must be 0 or 1");
  }
  catalog.expect_end();
  cp.catalog = ItemCatalog::build(std::move(ids), std::move(counts), head_fraction);
  if (cp.catalog.tail_flags() != tail)
    throw FormatError("checkpoint file: stored tail flags disagree with stored click counts");

  BinReader tensors = read_section(r, "tensors");
  cp.params.n_items = static_cast<int32_t>(tensors.u32());
  cp.params.d = static_cast<int32_t>(tensors.u32());
  for (Tensor* slot : cp.params.tensors()) {
    const uint32_t rows = tensors.u32();
    const uint32_t cols = tensors.u32();
    const uint64_t entries = static_cast<uint64_t>(rows) * (cols == 0 ? 1 : cols);
    if (entries > tensors.remaining() / 8)
      throw FormatError("checkpoint file: tensor section too short for declared shape");
    Tensor t = cols == 0 ? Tensor::vector(rows) : Tensor::matrix(rows, cols);
    for (int64_t i = 0; i < t.size(); ++i) t.mutable_data()[i] = tensors.f64();
    *slot = std::move(t);
  }
  tensors.expect_end();

  BinReader meta = read_section(r, "meta");
  cp.best_valid_mrr = meta.f64();
  cp.best_epoch = static_cast<int32_t>(meta.u32());
  meta.expect_end();
  r.expect_end();

  try {
    cp.config.validate();
    cp.params.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint file: inconsistent contents: ") + e.what());
  }
  if (cp.catalog.size() != cp.params.n_items)
    throw FormatError("checkpoint file: catalog and tensor sections disagree on item count");
  return cp;
}

}  // namespace tailnet
