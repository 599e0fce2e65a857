#pragma once

#include <string>

#include "tailnet/catalog.hpp"

namespace tailnet {

// Dataset container: magic "TLDS", format version u16, catalog (ids, click
// counts, tail flags), then the train/valid/test pair lists. All integers
// little-endian. Loading validates the whole file: bad magic or version,
// truncation, trailing bytes, out-of-range indices, and tail flags that
// disagree with the stored counts are all format errors.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace tailnet
