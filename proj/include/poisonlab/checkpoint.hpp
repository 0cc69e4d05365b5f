#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "poisonlab/mlp.hpp"

namespace poisonlab {

// Text checkpoints. Each block is
//
//   poisonlab-ckpt v1
//   <kind> arch=<a> head=<h> state_dim=<d> hidden=<h> out=<o> params=<n>
//   <n lines, one %.17g float each, in flat parameter order>
//
// `kind` is `policy` or `value`; `head` is omitted for value blocks. A file
// may hold several blocks back to back (a learner writes policy then critic).

void write_checkpoint(std::ostream& os, const PolicyParams& params);
void write_checkpoint(std::ostream& os, const ValueParams& params);

PolicyParams read_policy_checkpoint(std::istream& is);
ValueParams read_value_checkpoint(std::istream& is);

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& text);

}  // namespace poisonlab
