#include "tailnet/dataset_io.hpp"

#include <cstring>

#include "tailnet/binio.hpp"

namespace tailnet {

namespace {

constexpr char kMagic[4] = {'T', 'L', 'D', 'S'};
constexpr uint16_t kVersion = 1;

void write_pairs(BinWriter& w, const std::vector<SessionPair>& pairs) {
  w.u32(static_cast<uint32_t>(pairs.size()));
  for (const SessionPair& p : pairs) {
    if (p.prefix.empty() || p.prefix.size() > UINT16_MAX)
      throw UsageError("session prefix length out of range for serialization");
    w.u16(static_cast<uint16_t>(p.prefix.size()));
    for (int32_t idx : p.prefix) w.u32(static_cast<uint32_t>(idx));
    w.u32(static_cast<uint32_t>(p.target));
  }
}

std::vector<SessionPair> read_pairs(BinReader& r, uint32_t n_items, const char* split) {
  auto check_index = [&](uint32_t idx) {
    if (idx >= n_items)
      throw FormatError(std::string("dataset file: ") + split + " pair references item index " +
                        std::to_string(idx) + " but catalog has " + std::to_string(n_items) +
                        " items");
    return static_cast<int32_t>(idx);
  };
  const uint32_t n = r.u32();
  // Each pair occupies at least 10 bytes (length prefix, one item, target).
  if (n > r.remaining() / 10)
    throw FormatError(std::string("dataset file: ") + split +
                      " section too short for declared pair count");
  std::vector<SessionPair> pairs(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint16_t len = r.u16();
    if (len == 0)
      throw FormatError(std::string("dataset file: empty prefix in ") + split + " pair list");
    pairs[i].prefix.resize(len);
    for (uint16_t j = 0; j < len; ++j) pairs[i].prefix[j] = check_index(r.u32());
    pairs[i].target = check_index(r.u32());
  }
  return pairs;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  BinWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);

  const ItemCatalog& cat = ds.catalog;
  w.u32(static_cast<uint32_t>(cat.size()));
  w.f64(cat.head_fraction());
  for (int32_t i = 0; i < cat.size(); ++i) {
    w.str(cat.id_of(i));
    w.u64(static_cast<uint64_t>(cat.click_count(i)));
    w.u8(cat.is_tail(i) ? 1 : 0);
  }

  write_pairs(w, ds.train);
  write_pairs(w, ds.valid);
  write_pairs(w, ds.test);
  write_file_bytes(path, w.buffer());
}

Dataset load_dataset(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  BinReader r(bytes.data(), bytes.size(), "dataset file");

  const uint8_t* magic = r.take(4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("dataset file: bad magic bytes (not a dataset container)");
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError("dataset file: unsupported format version " + std::to_string(version));

  const uint32_t n_items = r.u32();
  const double head_fraction = r.f64();
  // Each item occupies at least 11 bytes (length prefix, count, flag).
  if (n_items > r.remaining() / 11)
    throw FormatError("dataset file: catalog section too short for declared item count");
  std::vector<std::string> ids(n_items);
  std::vector<int64_t> counts(n_items);
  std::vector<uint8_t> tail(n_items);
  for (uint32_t i = 0; i < n_items; ++i) {
    ids[i] = r.str();
    counts[i] = static_cast<int64_t>(r.u64());
    tail[i] = r.u8();
    if (tail[i] > 1) throw FormatError("dataset file: tail flag must be 0 or 1");
  }

  Dataset ds;
  ds.catalog = ItemCatalog::build(std::move(ids), std::move(counts), head_fraction);
  if (ds.catalog.tail_flags() != tail)
    throw FormatError("dataset file: stored tail flags disagree with stored click counts");

  ds.train = read_pairs(r, n_items, "train");
  ds.valid = read_pairs(r, n_items, "valid");
  ds.test = read_pairs(r, n_items, "test");
  r.expect_end();
  return ds;
}

}  // namespace tailnet
