#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "raregan/nn.hpp"

namespace raregan {

// Text checkpoint format, version 1:
//
//   raregan-net 1
//   layers <L>
//   layer <in> <out> <activation> <n_groups> [group widths...]
//   <out*in weights, row-major, %.17g>
//   <out biases>
//   ... (repeated L times)
//   end
//
// Doubles are written with 17 significant digits so a save/load roundtrip is
// bit-exact. Several networks may be written back to back in one stream.
void save_net(std::ostream& out, const DenseNet& net);
DenseNet load_net(std::istream& in);

void save_nets(const std::filesystem::path& path, const std::vector<DenseNet>& nets);
std::vector<DenseNet> load_nets(const std::filesystem::path& path);

}  // namespace raregan
