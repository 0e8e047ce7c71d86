#include <hbt/tree.hpp>

#include <algorithm>
#include <charconv>
#include <random>
#include <sstream>
#include <utility>

namespace hbt {

namespace {

constexpr std::uint64_t max_perfect_height = 40;

auto perfect_nodes(std::uint64_t height) -> std::uint64_t {
  return (std::uint64_t(1) << height) - 1;
}

class value_source {
public:
  value_source(ValueMode mode, std::mt19937_64& rng)
    : mode_(mode), rng_(rng) { }

  auto next() -> std::int64_t {
    switch (mode_) {
    case ValueMode::AllOnes:
      return 1;
    case ValueMode::Sequential:
      return ++counter_;
    case ValueMode::RandomSmall:
      return static_cast<std::int64_t>(rng_() % 201) - 100;
    }
    return 0;
  }

private:
  ValueMode mode_;
  std::mt19937_64& rng_;
  std::int64_t counter_ = 0;
};

// Builds a perfect subtree of `height` levels into `slot`, allocating in
// preorder. Returns nothing; leaves are collected when `leaves` is non-null.
auto build_perfect(std::vector<Node>& nodes, Node** slot, std::uint64_t height,
                   value_source& values, std::vector<Node*>* leaves) -> void {
  std::vector<std::pair<Node**, std::uint64_t>> todo;
  todo.emplace_back(slot, 1);
  while (! todo.empty()) {
    auto [s, level] = todo.back();
    todo.pop_back();
    Node& n = nodes.emplace_back();
    n.v = values.next();
    *s = &n;
    if (level < height) {
      todo.emplace_back(&n.bs[1], level + 1);
      todo.emplace_back(&n.bs[0], level + 1);
    } else if (leaves != nullptr) {
      leaves->push_back(&n);
    }
  }
}

auto build_path(std::vector<Node>& nodes, Node** slot, std::uint64_t length,
                value_source& values) -> void {
  for (std::uint64_t i = 0; i < length; i++) {
    Node& n = nodes.emplace_back();
    n.v = values.next();
    *slot = &n;
    slot = &n.bs[0];
  }
}

auto require(bool ok, const char* what) -> void {
  if (! ok) {
    throw invalid_spec(what);
  }
}

} // end namespace

auto validate(const TreeSpec& spec) -> void {
  switch (spec.kind) {
  case TreeKind::Perfect:
    require(spec.height > 0, "perfect tree needs height >= 1");
    require(spec.height <= max_perfect_height, "perfect tree height too large");
    break;
  case TreeKind::Random:
    require(spec.count > 0, "random tree needs count >= 1");
    break;
  case TreeKind::Chains:
    require(spec.height > 0, "chains tree needs height >= 1");
    require(spec.height <= max_perfect_height, "chains base height too large");
    require(spec.count > 0, "chains tree needs count >= 1");
    require(spec.path_len > 0, "chains tree needs path_len >= 1");
    require(spec.count <= (std::uint64_t(1) << (spec.height - 1)),
            "chains count exceeds the number of leaves of the base tree");
    require(spec.path_len <= (std::uint64_t(1) << 40) / spec.count, "chains tree too large");
    break;
  case TreeKind::Chain:
    require(spec.count > 0, "chain needs count >= 1");
    break;
  }
}

auto expected_node_count(const TreeSpec& spec) -> std::uint64_t {
  validate(spec);
  switch (spec.kind) {
  case TreeKind::Perfect:
    return perfect_nodes(spec.height);
  case TreeKind::Chains:
    return perfect_nodes(spec.height) + spec.count * spec.path_len;
  case TreeKind::Random:
  case TreeKind::Chain:
    return spec.count;
  }
  return 0;
}

auto generate(const TreeSpec& spec) -> Tree {
  auto total = expected_node_count(spec);
  Tree t;
  t.nodes_.reserve(total);
  std::mt19937_64 rng(spec.seed);
  value_source values(spec.values, rng);

  switch (spec.kind) {
  case TreeKind::Perfect:
    build_perfect(t.nodes_, &t.root_, spec.height, values, nullptr);
    t.height_ = spec.height;
    break;
  case TreeKind::Random: {
    // Empty slots of the current tree, with the depth a node placed there
    // would have.
    std::vector<std::pair<Node**, std::uint64_t>> slots;
    slots.emplace_back(&t.root_, 1);
    for (std::uint64_t i = 0; i < spec.count; i++) {
      auto pick = static_cast<std::size_t>(rng() % slots.size());
      auto [slot, depth] = slots[pick];
      slots[pick] = slots.back();
      slots.pop_back();
      Node& n = t.nodes_.emplace_back();
      n.v = values.next();
      *slot = &n;
      t.height_ = std::max(t.height_, depth);
      slots.emplace_back(&n.bs[0], depth + 1);
      slots.emplace_back(&n.bs[1], depth + 1);
    }
    break;
  }
  case TreeKind::Chains: {
    std::vector<Node*> leaves;
    build_perfect(t.nodes_, &t.root_, spec.height, values, &leaves);
    // Partial Fisher-Yates: the first `count` entries become the chosen leaves.
    for (std::uint64_t i = 0; i < spec.count; i++) {
      auto j = i + rng() % (leaves.size() - i);
      std::swap(leaves[i], leaves[j]);
      build_path(t.nodes_, &leaves[i]->bs[0], spec.path_len, values);
    }
    t.height_ = spec.height + spec.path_len;
    break;
  }
  case TreeKind::Chain:
    build_path(t.nodes_, &t.root_, spec.count, values);
    t.height_ = spec.count;
    break;
  }
  return t;
}

auto oracle_sum(const Node* root) -> std::int64_t {
  std::uint64_t total = 0;
  std::vector<const Node*> work;
  if (root != nullptr) {
    work.push_back(root);
  }
  while (! work.empty()) {
    const Node* n = work.back();
    work.pop_back();
    total += static_cast<std::uint64_t>(n->v);
    for (const Node* c : n->bs) {
      if (c != nullptr) {
        work.push_back(c);
      }
    }
  }
  return static_cast<std::int64_t>(total);
}

/*---------------------------------------------------------------------*/
/* Text form */

auto to_string(TreeKind kind) -> std::string_view {
  switch (kind) {
  case TreeKind::Perfect: return "perfect";
  case TreeKind::Random:  return "random";
  case TreeKind::Chains:  return "chains";
  case TreeKind::Chain:   return "chain";
  }
  return "?";
}

auto to_string(ValueMode mode) -> std::string_view {
  switch (mode) {
  case ValueMode::AllOnes:     return "ones";
  case ValueMode::Sequential:  return "seq";
  case ValueMode::RandomSmall: return "rand";
  }
  return "?";
}

auto parse_tree_kind(std::string_view name) -> TreeKind {
  for (auto k : {TreeKind::Perfect, TreeKind::Random, TreeKind::Chains, TreeKind::Chain}) {
    if (to_string(k) == name) {
      return k;
    }
  }
  throw invalid_spec("unknown tree kind: " + std::string(name));
}

auto parse_value_mode(std::string_view name) -> ValueMode {
  for (auto m : {ValueMode::AllOnes, ValueMode::Sequential, ValueMode::RandomSmall}) {
    if (to_string(m) == name) {
      return m;
    }
  }
  throw invalid_spec("unknown value mode: " + std::string(name));
}

namespace {

auto parse_u64(std::string_view key, std::string_view text) -> std::uint64_t {
  std::uint64_t x = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw invalid_spec("bad integer for " + std::string(key) + ": " + std::string(text));
  }
  return x;
}

} // end namespace

auto parse_tree_spec(std::string_view text) -> TreeSpec {
  TreeSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    std::istringstream words(line);
    std::string word;
    while (words >> word) {
      auto eq = word.find('=');
      if (eq == std::string::npos) {
        throw invalid_spec("expected key=value, got: " + word);
      }
      auto key = std::string_view(word).substr(0, eq);
      auto value = std::string_view(word).substr(eq + 1);
      if (key == "kind") {
        spec.kind = parse_tree_kind(value);
      } else if (key == "height") {
        spec.height = parse_u64(key, value);
      } else if (key == "count") {
        spec.count = parse_u64(key, value);
      } else if (key == "path_len") {
        spec.path_len = parse_u64(key, value);
      } else if (key == "seed") {
        spec.seed = parse_u64(key, value);
      } else if (key == "values") {
        spec.values = parse_value_mode(value);
      } else {
        throw invalid_spec("unknown key: " + std::string(key));
      }
    }
  }
  return spec;
}

auto to_string(const TreeSpec& spec) -> std::string {
  std::ostringstream out;
  out << "kind=" << to_string(spec.kind)
      << " height=" << spec.height
      << " count=" << spec.count
      << " path_len=" << spec.path_len
      << " seed=" << spec.seed
      << " values=" << to_string(spec.values);
  return out.str();
}

} // namespace hbt
