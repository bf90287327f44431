#include "webforge/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "webforge/error.hpp"
#include "webforge/url.hpp"

namespace webforge {
namespace {

using html::Document;
using html::NodeId;
using html::NodeKind;

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\f");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\f");
  return std::string(s.substr(b, e - b + 1));
}

bool is_data_url(std::string_view url) { return lowercase(trim(url)).starts_with("data:"); }

/// url(...) references inside every `background-image` declaration of an inline style.
std::vector<std::string> background_urls(std::string_view style) {
  std::vector<std::string> urls;
  const std::string lower = lowercase(style);
  std::size_t pos = 0;
  while ((pos = lower.find("background-image", pos)) != std::string::npos) {
    std::size_t i = pos + 16;
    pos = i;
    while (i < lower.size() && std::isspace(static_cast<unsigned char>(lower[i]))) ++i;
    if (i >= lower.size() || lower[i] != ':') continue;
    const std::size_t decl_end = std::min(lower.find(';', i), lower.size());
    std::size_t u = i;
    while ((u = lower.find("url(", u)) != std::string::npos && u < decl_end) {
      const std::size_t close = lower.find(')', u + 4);
      if (close == std::string::npos) break;
      std::string inner = trim(style.substr(u + 4, close - u - 4));
      if (inner.size() >= 2 && (inner.front() == '"' || inner.front() == '\'') && inner.back() == inner.front()) {
        inner = trim(inner.substr(1, inner.size() - 2));
      }
      if (!inner.empty()) urls.push_back(std::move(inner));
      u = close + 1;
    }
  }
  return urls;
}

struct RawImage {
  NodeId node;
  ImageSource kind;
  std::string reference;
};

std::vector<RawImage> raw_images(const Document& doc) {
  std::vector<RawImage> out;
  for (NodeId id = 0; id < doc.size(); ++id) {
    const auto& n = doc.node(id);
    if (n.kind != NodeKind::element) continue;
    if (n.tag == "img") {
      if (const std::string* src = n.attribute("src"); src && !trim(*src).empty() && !is_data_url(*src)) {
        out.push_back({id, ImageSource::img_src, trim(*src)});
      }
    }
    if (const std::string* style = n.attribute("style")) {
      for (auto& url : background_urls(*style)) {
        if (!is_data_url(url)) out.push_back({id, ImageSource::css_background, std::move(url)});
      }
    }
  }
  return out;
}

std::string effective_base(const Document& doc, std::string_view base_url) {
  for (NodeId id = 0; id < doc.size(); ++id) {
    const auto& n = doc.node(id);
    if (n.kind == NodeKind::element && n.tag == "base") {
      if (const std::string* href = n.attribute("href"); href && !trim(*href).empty()) {
        if (auto r = resolve_url(base_url, trim(*href))) return *r;
      }
    }
  }
  return std::string(base_url);
}

bool is_context_tag(std::string_view tag) {
  return tag == "p" || tag == "h1" || tag == "h2" || tag == "h3" || tag == "h4";
}

bool contains_other_image(const Document& doc, NodeId div, NodeId self, const std::set<NodeId>& image_nodes) {
  for (NodeId img : image_nodes) {
    if (img != self && (img == div || doc.is_ancestor(div, img))) return true;
  }
  return false;
}

}  // namespace

std::vector<ImageRef> find_images(std::string_view source, std::string_view base_url) {
  return find_images(html::parse(source), base_url);
}

std::vector<ImageRef> find_images(const Document& doc, std::string_view base_url) {
  const std::string base = effective_base(doc, base_url);
  std::vector<ImageRef> refs;
  for (auto& raw : raw_images(doc)) {
    auto url = resolve_url(base, raw.reference);
    if (!url) continue;
    refs.push_back({std::move(*url), raw.kind, doc.path_of(raw.node)});
  }
  return refs;
}

ContextExtract extract_context(std::string_view source, const ImageRef& ref) {
  return extract_context(html::parse(source), ref);
}

ContextExtract extract_context(const Document& doc, const ImageRef& ref) {
  const auto target = doc.at_path(ref.node_path);
  if (!target) throw Error(ErrorKind::InvalidNodePath, "node path does not address an element");
  const auto& element = doc.node(*target);

  ContextExtract out;
  std::vector<std::string> combined;
  std::set<std::string> seen;
  if (const std::string* alt = element.attribute("alt")) {
    std::string text = html::normalize_whitespace(*alt);
    if (!text.empty()) {
      out.alt_text = text;
      seen.insert(text);
      combined.push_back(std::move(text));
    }
  }

  std::set<NodeId> image_nodes;
  for (const auto& raw : raw_images(doc)) image_nodes.insert(raw.node);

  std::optional<NodeId> scope = element.tag == "div" ? std::optional<NodeId>(*target) : doc.ancestor_with_tag(*target, "div");
  if (scope) {
    for (auto parent = doc.ancestor_with_tag(*scope, "div"); parent; parent = doc.ancestor_with_tag(*parent, "div")) {
      if (contains_other_image(doc, *parent, *target, image_nodes)) break;
      scope = parent;
    }
    // Node ids are in document order, so a forward scan of the subtree is a pre-order walk.
    NodeId skip_until = 0;
    for (NodeId id = *scope + 1; id < doc.size() && doc.is_ancestor(*scope, id); ++id) {
      if (id < skip_until) continue;
      const auto& n = doc.node(id);
      if (n.kind != NodeKind::element || !is_context_tag(n.tag)) continue;
      NodeId end = id + 1;
      while (end < doc.size() && doc.is_ancestor(id, end)) ++end;
      skip_until = end;
      std::string text = html::normalize_whitespace(doc.text_content(id));
      if (text.empty() || !seen.insert(text).second) continue;
      (n.tag == "p" ? out.paragraph_texts : out.heading_texts).push_back(text);
      combined.push_back(std::move(text));
    }
  }

  for (std::size_t i = 0; i < combined.size(); ++i) {
    if (i) out.combined_prompt += "; ";
    out.combined_prompt += combined[i];
  }
  return out;
}

std::string build_server_prompt(const ContextExtract& context, std::string_view caption) {
  const std::string cap = html::normalize_whitespace(caption);
  if (cap.empty()) throw Error(ErrorKind::EmptyCaption, "caption must be nonempty");
  const std::string ctx = html::normalize_whitespace(context.combined_prompt);
  return ctx.empty() ? cap : cap + "; " + ctx;
}

AnnotateResult annotate_archive(const PageArchive& archive, Captioner* captioner) {
  AnnotateResult result{archive, {}};
  PageArchive& a = result.archive;
  const std::string* root_html = a.body(a.root());
  if (!root_html) throw Error(ErrorKind::InvalidArchive, "root document body missing");
  const Document doc = html::parse(*root_html);
  const auto refs = find_images(doc, a.page_url);

  for (auto& img : a.images) {
    const auto match = std::find_if(refs.begin(), refs.end(), [&](const ImageRef& r) {
      return r.url == img.url || downgrade_to_http(r.url) == downgrade_to_http(img.url);
    });
    ContextExtract ctx;
    if (match != refs.end()) ctx = extract_context(doc, *match);
    img.alt_text = ctx.alt_text;
    img.client_prompt = ctx.combined_prompt;

    if (!captioner) continue;
    const ArchiveEntry* entry = a.lookup(img.url);
    const std::string* bytes = entry ? a.body(*entry) : nullptr;
    try {
      if (!bytes) throw Error(ErrorKind::InvalidArchive, "no archived body");
      std::string caption = html::normalize_whitespace(captioner->caption(*bytes));
      img.server_prompt = build_server_prompt(ctx, caption);
      img.caption = std::move(caption);
    } catch (const Error& e) {
      img.caption.reset();
      img.server_prompt.reset();
      result.warnings.push_back("caption failed for " + img.url + ": " + e.what());
    }
  }
  return result;
}

}  // namespace webforge
