#include <hbt/kont.hpp>

#include <sstream>

namespace hbt {

auto operator==(const Frame& a, const Frame& b) -> bool {
  if (a.kind_ != b.kind_) {
    return false;
  }
  switch (a.kind_) {
  case FrameKind::KTerm:
    return a.ans() == b.ans();
  case FrameKind::KPBranch:
    return a.branch() == b.branch() && a.results() == b.results() && a.join_task() == b.join_task();
  case FrameKind::KSBranch0:
    return a.node() == b.node();
  case FrameKind::KSBranch1:
    return a.s0() == b.s0() && a.node() == b.node();
  }
  return false;
}

auto describe(std::span<const Frame> frames, const NodeNamer& name) -> std::string {
  auto node_name = [&] (const Node* n) {
    return name ? name(n) : "n" + std::to_string(n->v);
  };
  std::ostringstream out;
  bool first = true;
  for (const Frame& f : frames) {
    if (! first) {
      out << '|';
    }
    first = false;
    switch (f.kind()) {
    case FrameKind::KTerm:
      out << "KTerm";
      break;
    case FrameKind::KPBranch:
      out << "KPB(" << f.branch() << ")";
      break;
    case FrameKind::KSBranch0:
      out << "KSB0(" << node_name(f.node()) << ")";
      break;
    case FrameKind::KSBranch1:
      out << "KSB1(" << f.s0() << "," << node_name(f.node()) << ")";
      break;
    }
  }
  return out.str();
}

auto arena_namer(const Tree& tree) -> NodeNamer {
  return [&tree] (const Node* n) { return "n" + std::to_string(tree.index_of(n)); };
}

} // namespace hbt
