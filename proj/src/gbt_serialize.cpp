#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "xdmatch/common.hpp"
#include "xdmatch/gbt.hpp"

namespace xdm {

namespace {

constexpr const char* kModelMagic = "xdmatch-model";
constexpr const char* kEnsembleMagic = "xdmatch-ensemble";
constexpr int kFormatVersion = 1;

void write_params(std::ostream& out, const BoostParams& p) {
  out << "rounds " << p.rounds << "\n";
  out << "max_depth " << p.max_depth << "\n";
  out << "subsample " << format_double(p.subsample) << "\n";
  out << "min_child_weight " << format_double(p.min_child_weight) << "\n";
  out << "learning_rate " << format_double(p.learning_rate) << "\n";
  out << "min_split_gain " << format_double(p.min_split_gain) << "\n";
  out << "l2_reg " << format_double(p.l2_reg) << "\n";
  out << "base_score " << format_double(p.base_score) << "\n";
  out << "missing_code " << format_double(p.missing_code) << "\n";
}

// preorder emission: split lines are "s <feature_1based> <threshold> <L|R>",
// leaf lines are "l <weight>"
void write_node(std::ostream& out, const Tree& tree, int at) {
  const TreeNode& nd = tree.nodes[at];
  if (nd.feature < 0) {
    out << "l " << format_double(nd.weight) << "\n";
    return;
  }
  out << "s " << (nd.feature + 1) << " " << format_double(nd.threshold) << " "
      << (nd.missing_left ? 'L' : 'R') << "\n";
  write_node(out, tree, nd.left);
  write_node(out, tree, nd.right);
}

void write_model(std::ostream& out, const BoostedModel& model) {
  out << kModelMagic << " v" << kFormatVersion << "\n";
  write_params(out, model.params);
  out << "trees " << model.trees.size() << "\n";
  for (size_t t = 0; t < model.trees.size(); ++t) {
    out << "tree " << t << " nodes " << model.trees[t].nodes.size() << "\n";
    write_node(out, model.trees[t], 0);
  }
}

class LineParser {
 public:
  LineParser(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  std::string next() {
    std::string l;
    while (std::getline(in_, l)) {
      ++line_;
      if (!l.empty() && l.back() == '\r') l.pop_back();
      if (!l.empty()) return l;
    }
    fail("unexpected end of file");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(strfmt("%s:%d: ", origin_.c_str(), line_) + what);
  }

  // "key value" lines
  std::string expect_key(const std::string& key) {
    std::string l = next();
    if (l.rfind(key + " ", 0) != 0) fail("expected '" + key + " ...', got '" + l + "'");
    return l.substr(key.size() + 1);
  }

  long long to_int(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || errno != 0 || end != s.c_str() + s.size()) fail("malformed integer '" + s + "'");
    return v;
  }

  double to_double(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || errno != 0 || end != s.c_str() + s.size()) fail("malformed number '" + s + "'");
    return v;
  }

 private:
  std::istream& in_;
  std::string origin_;
  int line_ = 0;
};

int read_node(LineParser& p, Tree& tree, int max_features) {
  const int at = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  std::string l = p.next();
  std::istringstream ss(l);
  std::string tag;
  ss >> tag;
  if (tag == "l") {
    std::string w;
    ss >> w;
    tree.nodes[at].weight = p.to_double(w);
  } else if (tag == "s") {
    std::string feat, thr, dir;
    ss >> feat >> thr >> dir;
    long long f = p.to_int(feat);
    if (f < 1 || (max_features > 0 && f > max_features)) p.fail("feature index out of range");
    tree.nodes[at].feature = static_cast<int>(f - 1);
    tree.nodes[at].threshold = p.to_double(thr);
    if (dir == "L") tree.nodes[at].missing_left = true;
    else if (dir == "R") tree.nodes[at].missing_left = false;
    else p.fail("missing direction must be L or R");
    const int left = read_node(p, tree, max_features);
    const int right = read_node(p, tree, max_features);
    tree.nodes[at].left = left;
    tree.nodes[at].right = right;
  } else {
    p.fail("expected node line, got '" + l + "'");
  }
  return at;
}

BoostedModel read_model(LineParser& p) {
  std::string head = p.next();
  if (head != std::string(kModelMagic) + " v1") p.fail("bad model header '" + head + "'");
  BoostedModel model;
  model.params.rounds = static_cast<int>(p.to_int(p.expect_key("rounds")));
  model.params.max_depth = static_cast<int>(p.to_int(p.expect_key("max_depth")));
  model.params.subsample = p.to_double(p.expect_key("subsample"));
  model.params.min_child_weight = p.to_double(p.expect_key("min_child_weight"));
  model.params.learning_rate = p.to_double(p.expect_key("learning_rate"));
  model.params.min_split_gain = p.to_double(p.expect_key("min_split_gain"));
  model.params.l2_reg = p.to_double(p.expect_key("l2_reg"));
  model.params.base_score = p.to_double(p.expect_key("base_score"));
  model.params.missing_code = p.to_double(p.expect_key("missing_code"));
  const long long n_trees = p.to_int(p.expect_key("trees"));
  for (long long t = 0; t < n_trees; ++t) {
    std::string header = p.next();
    std::istringstream ss(header);
    std::string tag, nodes_tag;
    long long idx = -1, n_nodes = -1;
    ss >> tag >> idx >> nodes_tag >> n_nodes;
    if (tag != "tree" || idx != t || nodes_tag != "nodes") p.fail("bad tree header '" + header + "'");
    Tree tree;
    read_node(p, tree, 0);
    if (static_cast<long long>(tree.nodes.size()) != n_nodes) p.fail("tree node count mismatch");
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace

void save_model(const BoostedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_model(out, model);
  if (!out) throw std::runtime_error("write failed: " + path);
}

BoostedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  LineParser p(in, path);
  return read_model(p);
}

void save_ensemble(const BaggedEnsemble& ensemble, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << kEnsembleMagic << " v" << kFormatVersion << "\n";
  out << "members " << ensemble.models.size() << "\n";
  out << "seeds";
  for (uint64_t s : ensemble.seeds) out << " " << s;
  out << "\n";
  for (const auto& m : ensemble.models) write_model(out, m);
  if (!out) throw std::runtime_error("write failed: " + path);
}

BaggedEnsemble load_ensemble(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  LineParser p(in, path);
  std::string head = p.next();
  if (head != std::string(kEnsembleMagic) + " v1") p.fail("bad ensemble header '" + head + "'");
  const long long members = p.to_int(p.expect_key("members"));
  std::string seed_line = p.expect_key("seeds");
  BaggedEnsemble ens;
  {
    std::istringstream ss(seed_line);
    uint64_t s;
    while (ss >> s) ens.seeds.push_back(s);
  }
  if (static_cast<long long>(ens.seeds.size()) != members) p.fail("seed count mismatch");
  for (long long i = 0; i < members; ++i) ens.models.push_back(read_model(p));
  return ens;
}

}  // namespace xdm
