#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace webforge::html {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xFFFFFFFFu;

enum class NodeKind { document, element, text };

struct Attribute {
  std::string name;  // lowercase
  std::string value;
};

struct Node {
  NodeKind kind = NodeKind::element;
  std::string tag;   // lowercase, elements only
  std::string text;  // text nodes only, entities decoded
  std::vector<Attribute> attributes;
  NodeId parent = kNoNode;
  std::vector<NodeId> children;

  const std::string* attribute(std::string_view name) const;
};

/// Error-recovering parse result. Node 0 is the document node; nodes are
/// stored in document (pre-)order.
class Document {
 public:
  const Node& node(NodeId id) const { return nodes_.at(id); }
  NodeId root() const noexcept { return 0; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Follows element-child indices from the document node.
  std::optional<NodeId> at_path(std::span<const std::size_t> path) const;
  std::vector<std::size_t> path_of(NodeId id) const;
  std::vector<NodeId> element_children(NodeId id) const;

  /// Concatenated descendant text, skipping script/style/template content.
  std::string text_content(NodeId id) const;

  bool is_ancestor(NodeId ancestor, NodeId node) const;

  /// Nearest ancestor element with the given tag (excluding `id` itself).
  std::optional<NodeId> ancestor_with_tag(NodeId id, std::string_view tag) const;

 private:
  friend Document parse(std::string_view);
  std::vector<Node> nodes_;
};

Document parse(std::string_view source);

std::string decode_entities(std::string_view text);

/// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

}  // namespace webforge::html
