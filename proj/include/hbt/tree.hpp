#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hbt {

// Node payloads are summed with two's-complement wraparound so that every
// traversal agrees bit-for-bit even on adversarial values.
inline auto wrapping_add(std::int64_t a, std::int64_t b) -> std::int64_t {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}

struct Node {
  std::int64_t v = 0;
  std::array<Node*, 2> bs = {nullptr, nullptr};
};

enum class TreeKind { Perfect, Random, Chains, Chain };

enum class ValueMode { AllOnes, Sequential, RandomSmall };

/// Declarative description of a benchmark input. Generation is a pure
/// function of every field, seed included.
///
///   Perfect  full binary tree with `height` levels
///   Random   `count` insertions, each filling a uniformly chosen empty slot
///   Chains   perfect tree of `height` levels, `count` distinct leaves each
///            extended by a bs[0] path of `path_len` nodes
///   Chain    `count` nodes linked through bs[0]
struct TreeSpec {
  TreeKind kind = TreeKind::Perfect;
  std::uint64_t height = 1;
  std::uint64_t count = 1;
  std::uint64_t path_len = 1;
  std::uint64_t seed = 0;
  ValueMode values = ValueMode::AllOnes;

  friend auto operator==(const TreeSpec&, const TreeSpec&) -> bool = default;
};

class invalid_spec : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Owns every node of one generated tree in a single arena. Nodes never move
/// once generated, so raw `const Node*` views stay valid for the tree's
/// lifetime (including across moves of the Tree itself).
class Tree {
public:
  Tree() = default;
  Tree(Tree&&) noexcept = default;
  auto operator=(Tree&&) noexcept -> Tree& = default;
  Tree(const Tree&) = delete;
  auto operator=(const Tree&) -> Tree& = delete;

  static auto empty() -> Tree { return Tree(); }

  auto root() const -> const Node* { return root_; }
  auto node_count() const -> std::uint64_t { return nodes_.size(); }
  // Number of nodes on the longest root-to-leaf path; 0 for the empty tree.
  auto height() const -> std::uint64_t { return height_; }
  // Arena index of a node of this tree (allocation order).
  auto index_of(const Node* n) const -> std::size_t { return static_cast<std::size_t>(n - nodes_.data()); }

private:
  friend auto generate(const TreeSpec& spec) -> Tree;

  std::vector<Node> nodes_;
  Node* root_ = nullptr;
  std::uint64_t height_ = 0;
};

/// Throws invalid_spec when a field the kind depends on is zero or the
/// requested size cannot be represented.
auto validate(const TreeSpec& spec) -> void;

auto generate(const TreeSpec& spec) -> Tree;

/// Node count implied by a valid spec, without generating.
auto expected_node_count(const TreeSpec& spec) -> std::uint64_t;

/// Sum of all node values by an explicit worklist. Independent of every
/// traversal variant; used as the reference answer.
auto oracle_sum(const Node* root) -> std::int64_t;

// Key-value text form used by fixtures and the CLI, e.g.
//   kind=chains height=4 count=2 path_len=10 seed=7 values=seq
// Pairs are separated by whitespace or newlines; '#' starts a comment.
auto parse_tree_spec(std::string_view text) -> TreeSpec;
auto to_string(const TreeSpec& spec) -> std::string;

auto to_string(TreeKind kind) -> std::string_view;
auto to_string(ValueMode mode) -> std::string_view;
auto parse_tree_kind(std::string_view name) -> TreeKind;
auto parse_value_mode(std::string_view name) -> ValueMode;

} // namespace hbt
