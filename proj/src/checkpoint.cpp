#include "poisonlab/checkpoint.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "poisonlab/errors.hpp"

namespace poisonlab {

namespace {

constexpr const char* kMagic = "poisonlab-ckpt v1";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_block(std::ostream& os, const std::string& kind, const Mlp& net, const char* head,
                 const Vector& flat) {
  os << kMagic << '\n' << kind << " arch=" << to_string(net.arch);
  if (head) os << " head=" << head;
  os << " state_dim=" << net.input_dim() << " hidden=" << net.hidden_size()
     << " out=" << net.output_dim() << " params=" << flat.size() << '\n';
  for (Index i = 0; i < flat.size(); ++i) os << format_double(flat[i]) << '\n';
}

struct BlockHeader {
  std::string kind;
  std::map<std::string, std::string> fields;

  long integer(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw InputError("checkpoint header lacks '" + key + "'");
    return std::stol(it->second);
  }
};

BlockHeader read_header(std::istream& is) {
  std::string line;
  while (std::getline(is, line) && line.empty()) {
  }
  if (line != kMagic) throw InputError("not a poisonlab checkpoint (bad magic line)");
  if (!std::getline(is, line)) throw InputError("checkpoint truncated after magic line");
  std::istringstream ss(line);
  BlockHeader h;
  ss >> h.kind;
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw InputError("malformed checkpoint field '" + tok + "'");
    h.fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return h;
}

Vector read_values(std::istream& is, long n) {
  Vector flat(n);
  std::string line;
  for (long i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw InputError("checkpoint truncated in parameter list");
    flat[i] = std::stod(line);
  }
  return flat;
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::mlp: return "mlp";
    case Architecture::linear: return "linear";
    case Architecture::tabular: return "tabular";
  }
  return "mlp";
}

Architecture parse_architecture(const std::string& text) {
  if (text == "mlp") return Architecture::mlp;
  if (text == "linear") return Architecture::linear;
  if (text == "tabular") return Architecture::tabular;
  throw ConfigError("unknown architecture '" + text + "'");
}

void write_checkpoint(std::ostream& os, const PolicyParams& params) {
  write_block(os, "policy", params.net, params.discrete() ? "softmax" : "gaussian", to_flat(params));
}

void write_checkpoint(std::ostream& os, const ValueParams& params) {
  write_block(os, "value", params.net, nullptr, to_flat(params));
}

PolicyParams read_policy_checkpoint(std::istream& is) {
  const BlockHeader h = read_header(is);
  if (h.kind != "policy") throw InputError("expected a policy block, found '" + h.kind + "'");
  const Architecture arch = parse_architecture(h.fields.at("arch"));
  const auto head = h.fields.count("head") ? h.fields.at("head") : std::string("softmax");
  PolicyParams shape = head == "gaussian"
                           ? zero_gaussian_policy(arch, h.integer("state_dim"), h.integer("hidden"),
                                                  h.integer("out"))
                           : zero_softmax_policy(arch, h.integer("state_dim"), h.integer("hidden"),
                                                 h.integer("out"));
  if (h.integer("params") != shape.num_params()) throw ShapeError("checkpoint shape line is inconsistent");
  return with_flat(shape, read_values(is, h.integer("params")));
}

ValueParams read_value_checkpoint(std::istream& is) {
  const BlockHeader h = read_header(is);
  if (h.kind != "value") throw InputError("expected a value block, found '" + h.kind + "'");
  ValueParams shape = zero_value(parse_architecture(h.fields.at("arch")), h.integer("state_dim"),
                                 h.integer("hidden"));
  if (h.integer("params") != shape.num_params()) throw ShapeError("checkpoint shape line is inconsistent");
  return with_flat(shape, read_values(is, h.integer("params")));
}

}  // namespace poisonlab
