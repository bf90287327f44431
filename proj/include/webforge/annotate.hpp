#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "webforge/archive.hpp"
#include "webforge/genclient.hpp"
#include "webforge/html.hpp"

namespace webforge {

enum class ImageSource { img_src, css_background };

struct ImageRef {
  std::string url;
  ImageSource source_kind = ImageSource::img_src;
  std::vector<std::size_t> node_path;  // element-child indices from the document node

  bool operator==(const ImageRef&) const = default;
};

struct ContextExtract {
  std::optional<std::string> alt_text;
  std::vector<std::string> heading_texts;
  std::vector<std::string> paragraph_texts;
  std::string combined_prompt;

  bool operator==(const ContextExtract&) const = default;
};

/// Every <img> with a non-empty, non-data: src and every element whose inline
/// style has `background-image: url(...)`, in document order.
std::vector<ImageRef> find_images(std::string_view html, std::string_view base_url);
std::vector<ImageRef> find_images(const html::Document& doc, std::string_view base_url);

/// Alt text plus p/h1-h4 text from the image's div, widened to enclosing divs
/// until one of them also holds another image. Throws Error{InvalidNodePath}.
ContextExtract extract_context(std::string_view html, const ImageRef& ref);
ContextExtract extract_context(const html::Document& doc, const ImageRef& ref);

/// caption + "; " + combined prompt, or just the caption when there is no context.
/// Throws Error{EmptyCaption}.
std::string build_server_prompt(const ContextExtract& context, std::string_view caption);

struct AnnotateResult {
  PageArchive archive;
  std::vector<std::string> warnings;
};

/// Fills client prompts for every manifest image and, with a captioner,
/// captions and server prompts. A captioner failure only affects that image.
AnnotateResult annotate_archive(const PageArchive& archive, Captioner* captioner = nullptr);

}  // namespace webforge
