#include "webforge/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <functional>

namespace webforge::html {
namespace {

constexpr std::array<std::string_view, 14> kVoidElements = {"area", "base", "br",    "col",   "embed",  "hr",    "img",
                                                            "input", "link", "meta", "param", "source", "track", "wbr"};
constexpr std::array<std::string_view, 5> kRawText = {"script", "style", "textarea", "title", "xmp"};
constexpr std::array<std::string_view, 30> kClosesParagraph = {
    "address", "article", "aside",  "blockquote", "details", "div",  "dl",      "fieldset", "figcaption", "figure",
    "footer",  "form",    "h1",     "h2",         "h3",      "h4",   "h5",      "h6",       "header",     "hr",
    "main",    "menu",    "nav",    "ol",         "p",       "pre",  "section", "table",    "ul",         "hgroup"};
constexpr std::array<std::string_view, 10> kScopeBoundary = {"html",    "table",  "td",     "th",     "caption",
                                                             "marquee", "object", "applet", "button", "template"};

template <std::size_t N>
bool in(const std::array<std::string_view, N>& set, std::string_view v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

bool is_heading(std::string_view t) {
  return t.size() == 2 && t[0] == 'h' && t[1] >= '1' && t[1] <= '6';
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out += char(cp);
  } else if (cp < 0x800) {
    out += char(0xC0 | (cp >> 6));
    out += char(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += char(0xE0 | (cp >> 12));
    out += char(0x80 | ((cp >> 6) & 0x3F));
    out += char(0x80 | (cp & 0x3F));
  } else {
    out += char(0xF0 | (cp >> 18));
    out += char(0x80 | ((cp >> 12) & 0x3F));
    out += char(0x80 | ((cp >> 6) & 0x3F));
    out += char(0x80 | (cp & 0x3F));
  }
}

struct NamedEntity {
  std::string_view name;
  std::uint32_t cp;
};
constexpr std::array<NamedEntity, 20> kEntities = {{
    {"amp", '&'},      {"lt", '<'},       {"gt", '>'},       {"quot", '"'},     {"apos", '\''},
    {"nbsp", 0xA0},    {"copy", 0xA9},    {"reg", 0xAE},     {"trade", 0x2122}, {"mdash", 0x2014},
    {"ndash", 0x2013}, {"hellip", 0x2026}, {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C},
    {"rdquo", 0x201D}, {"laquo", 0xAB},   {"raquo", 0xBB},   {"middot", 0xB7},  {"bull", 0x2022},
}};

class Builder {
 public:
  explicit Builder(std::vector<Node>& nodes) : nodes_(nodes) {
    nodes_.push_back(Node{NodeKind::document, {}, {}, {}, kNoNode, {}});
    stack_.push_back(0);
  }

  void text(std::string_view raw, bool decode) {
    if (raw.empty()) return;
    std::string t = decode ? decode_entities(raw) : std::string(raw);
    const NodeId parent = stack_.back();
    auto& siblings = nodes_[parent].children;
    if (!siblings.empty() && nodes_[siblings.back()].kind == NodeKind::text) {
      nodes_[siblings.back()].text += t;
      return;
    }
    add(Node{NodeKind::text, {}, std::move(t), {}, parent, {}});
  }

  NodeId start(std::string tag, std::vector<Attribute> attrs) {
    if (in(kClosesParagraph, tag)) close_in_scope("p");
    if (is_heading(tag) && is_heading(nodes_[stack_.back()].tag)) stack_.pop_back();
    if (tag == "li") close_in_scope("li", {"ul", "ol"});
    if (tag == "dd" || tag == "dt") {
      close_in_scope("dd", {"dl"});
      close_in_scope("dt", {"dl"});
    }
    if (tag == "option" && nodes_[stack_.back()].tag == "option") stack_.pop_back();
    const bool is_void = in(kVoidElements, tag);
    const NodeId id = add(Node{NodeKind::element, std::move(tag), {}, std::move(attrs), stack_.back(), {}});
    if (!is_void) stack_.push_back(id);
    return id;
  }

  void end(std::string_view tag) {
    if (is_heading(tag)) {
      // Any open heading closes on any heading end tag.
      for (std::size_t i = stack_.size(); i-- > 1;) {
        if (is_heading(nodes_[stack_[i]].tag)) {
          stack_.resize(i);
          return;
        }
        if (in(kScopeBoundary, nodes_[stack_[i]].tag)) return;
      }
      return;
    }
    for (std::size_t i = stack_.size(); i-- > 1;) {
      if (nodes_[stack_[i]].tag == tag) {
        stack_.resize(i);
        return;
      }
    }
  }

 private:
  NodeId add(Node n) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    const NodeId parent = n.parent;
    nodes_.push_back(std::move(n));
    nodes_[parent].children.push_back(id);
    return id;
  }

  void close_in_scope(std::string_view tag, std::initializer_list<std::string_view> extra_boundary = {}) {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      const std::string& t = nodes_[stack_[i]].tag;
      if (t == tag) {
        stack_.resize(i);
        return;
      }
      if (in(kScopeBoundary, t) || std::find(extra_boundary.begin(), extra_boundary.end(), t) != extra_boundary.end()) {
        return;
      }
    }
  }

  std::vector<Node>& nodes_;
  std::vector<NodeId> stack_;
};

class Tokenizer {
 public:
  Tokenizer(std::string_view src, Builder& b) : s_(src), b_(b) {}

  void run() {
    std::size_t text_start = 0;
    while (i_ < s_.size()) {
      if (s_[i_] != '<') {
        ++i_;
        continue;
      }
      const std::size_t lt = i_;
      if (s_.substr(i_, 4) == "<!--") {
        flush(text_start, lt);
        const auto close = s_.find("-->", i_ + 4);
        i_ = close == std::string_view::npos ? s_.size() : close + 3;
        text_start = i_;
      } else if (i_ + 1 < s_.size() && (s_[i_ + 1] == '!' || s_[i_ + 1] == '?')) {
        flush(text_start, lt);
        const auto close = s_.find('>', i_);
        i_ = close == std::string_view::npos ? s_.size() : close + 1;
        text_start = i_;
      } else if (i_ + 1 < s_.size() && s_[i_ + 1] == '/' && i_ + 2 < s_.size() &&
                 std::isalpha(static_cast<unsigned char>(s_[i_ + 2]))) {
        flush(text_start, lt);
        i_ += 2;
        std::string name = read_name();
        const auto close = s_.find('>', i_);
        i_ = close == std::string_view::npos ? s_.size() : close + 1;
        b_.end(name);
        text_start = i_;
      } else if (i_ + 1 < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_ + 1]))) {
        flush(text_start, lt);
        ++i_;
        std::string name = read_name();
        auto attrs = read_attributes();
        b_.start(name, std::move(attrs));
        text_start = i_;
        if (in(kRawText, name)) {
          const std::size_t body_start = i_;
          const std::size_t body_end = find_end_tag(name);
          b_.text(s_.substr(body_start, body_end - body_start), name == "textarea" || name == "title");
          const auto close = s_.find('>', body_end);
          i_ = (body_end >= s_.size() || close == std::string_view::npos) ? s_.size() : close + 1;
          b_.end(name);
          text_start = i_;
        }
      } else {
        ++i_;
      }
    }
    flush(text_start, s_.size());
  }

 private:
  void flush(std::size_t from, std::size_t to) {
    if (to > from) b_.text(s_.substr(from, to - from), true);
  }

  std::string read_name() {
    std::string name;
    while (i_ < s_.size() && !is_space(s_[i_]) && s_[i_] != '>' && s_[i_] != '/') name += lower(s_[i_++]);
    return name;
  }

  std::vector<Attribute> read_attributes() {
    std::vector<Attribute> attrs;
    while (i_ < s_.size()) {
      while (i_ < s_.size() && (is_space(s_[i_]) || s_[i_] == '/')) ++i_;
      if (i_ >= s_.size()) break;
      if (s_[i_] == '>') {
        ++i_;
        break;
      }
      std::string name;
      while (i_ < s_.size() && !is_space(s_[i_]) && s_[i_] != '>' && s_[i_] != '=' &&
             !(s_[i_] == '/' && name.size() > 0)) {
        name += lower(s_[i_++]);
      }
      while (i_ < s_.size() && is_space(s_[i_])) ++i_;
      std::string value;
      if (i_ < s_.size() && s_[i_] == '=') {
        ++i_;
        while (i_ < s_.size() && is_space(s_[i_])) ++i_;
        if (i_ < s_.size() && (s_[i_] == '"' || s_[i_] == '\'')) {
          const char q = s_[i_++];
          const auto close = s_.find(q, i_);
          const std::size_t end = close == std::string_view::npos ? s_.size() : close;
          value = decode_entities(s_.substr(i_, end - i_));
          i_ = end == s_.size() ? end : end + 1;
        } else {
          const std::size_t start = i_;
          while (i_ < s_.size() && !is_space(s_[i_]) && s_[i_] != '>') ++i_;
          value = decode_entities(s_.substr(start, i_ - start));
        }
      }
      if (name.empty()) {
        ++i_;
        continue;
      }
      const bool seen = std::any_of(attrs.begin(), attrs.end(), [&](const Attribute& a) { return a.name == name; });
      if (!seen) attrs.push_back({std::move(name), std::move(value)});
    }
    return attrs;
  }

  std::size_t find_end_tag(std::string_view name) const {
    for (std::size_t j = i_; j + 2 + name.size() <= s_.size(); ++j) {
      if (s_[j] != '<' || s_[j + 1] != '/') continue;
      bool match = true;
      for (std::size_t k = 0; k < name.size() && match; ++k) match = lower(s_[j + 2 + k]) == name[k];
      if (!match) continue;
      const std::size_t after = j + 2 + name.size();
      if (after == s_.size() || is_space(s_[after]) || s_[after] == '>' || s_[after] == '/') return j;
    }
    return s_.size();
  }

  std::string_view s_;
  Builder& b_;
  std::size_t i_ = 0;
};

}  // namespace

const std::string* Node::attribute(std::string_view name) const {
  for (const auto& a : attributes) {
    if (a.name == name) return &a.value;
  }
  return nullptr;
}

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '&') {
      out += text[i];
      continue;
    }
    const auto semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out += '&';
      continue;
    }
    const std::string_view name = text.substr(i + 1, semi - i - 1);
    bool done = false;
    if (!name.empty() && name[0] == '#') {
      const bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
      const std::string digits(name.substr(hex ? 2 : 1));
      char* end = nullptr;
      const unsigned long cp = digits.empty() ? 0 : std::strtoul(digits.c_str(), &end, hex ? 16 : 10);
      if (!digits.empty() && end && *end == '\0') {
        append_utf8(out, static_cast<std::uint32_t>(std::min<unsigned long>(cp, 0x110000)));
        done = true;
      }
    } else {
      for (const auto& e : kEntities) {
        if (e.name == name) {
          append_utf8(out, e.cp);
          done = true;
          break;
        }
      }
    }
    if (done) {
      i = semi;
    } else {
      out += '&';
    }
  }
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    // U+00A0 (C2 A0) counts as whitespace too.
    if (c == 0xC2 && i + 1 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0xA0) {
      pending_space = true;
      ++i;
      continue;
    }
    if (is_space(static_cast<char>(c)) || c == '\v') {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += static_cast<char>(c);
  }
  return out;
}

Document parse(std::string_view source) {
  Document doc;
  Builder builder(doc.nodes_);
  Tokenizer(source, builder).run();
  return doc;
}

std::vector<NodeId> Document::element_children(NodeId id) const {
  std::vector<NodeId> out;
  for (NodeId c : nodes_.at(id).children) {
    if (nodes_[c].kind == NodeKind::element) out.push_back(c);
  }
  return out;
}

std::optional<NodeId> Document::at_path(std::span<const std::size_t> path) const {
  NodeId cur = root();
  for (std::size_t index : path) {
    auto kids = element_children(cur);
    if (index >= kids.size()) return std::nullopt;
    cur = kids[index];
  }
  if (path.empty()) return std::nullopt;
  return cur;
}

std::vector<std::size_t> Document::path_of(NodeId id) const {
  std::vector<std::size_t> path;
  while (id != root() && id != kNoNode) {
    const NodeId parent = nodes_.at(id).parent;
    auto kids = element_children(parent);
    path.push_back(static_cast<std::size_t>(std::find(kids.begin(), kids.end(), id) - kids.begin()));
    id = parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::string Document::text_content(NodeId id) const {
  std::string out;
  std::function<void(NodeId)> walk = [&](NodeId n) {
    const Node& node = nodes_[n];
    if (node.kind == NodeKind::text) {
      out += node.text;
      return;
    }
    if (node.tag == "script" || node.tag == "style" || node.tag == "template") return;
    for (NodeId c : node.children) walk(c);
  };
  walk(id);
  return out;
}

bool Document::is_ancestor(NodeId ancestor, NodeId node) const {
  for (NodeId cur = nodes_.at(node).parent; cur != kNoNode; cur = nodes_[cur].parent) {
    if (cur == ancestor) return true;
  }
  return false;
}

std::optional<NodeId> Document::ancestor_with_tag(NodeId id, std::string_view tag) const {
  for (NodeId cur = nodes_.at(id).parent; cur != kNoNode; cur = nodes_[cur].parent) {
    if (nodes_[cur].kind == NodeKind::element && nodes_[cur].tag == tag) return cur;
  }
  return std::nullopt;
}

}  // namespace webforge::html
