#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "webforge/annotate.hpp"
#include "webforge/error.hpp"

namespace webforge {
namespace {

std::vector<std::string> split_prompt(const std::string& p) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (!p.empty() && i <= p.size()) {
    const auto j = std::min(p.find("; ", i), p.size());
    out.push_back(p.substr(i, j - i));
    i = j + 2;
  }
  return out;
}

TEST(FindImages, ImgSrcResolvedAgainstBase) {
  auto refs = find_images(R"(<img src="/a.png">)", "https://x.com");
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(refs[0].url, "https://x.com/a.png");
  EXPECT_EQ(refs[0].source_kind, ImageSource::img_src);
  EXPECT_EQ(refs[0].node_path, (std::vector<std::size_t>{0}));
}

TEST(FindImages, CssBackground) {
  auto refs = find_images(R"~(<div style="background-image: url('b.jpg')"></div>)~", "https://x.com");
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(refs[0].url, "https://x.com/b.jpg");
  EXPECT_EQ(refs[0].source_kind, ImageSource::css_background);
}

TEST(FindImages, DataUrlsAndEmptySrcExcluded) {
  EXPECT_TRUE(find_images(R"(<img src="data:image/png;base64,iVBORw0KGgo=">)", "https://x.com").empty());
  EXPECT_TRUE(find_images(R"(<img src="  "><img>)", "https://x.com").empty());
  EXPECT_TRUE(find_images(R"~(<div style="background-image:url(data:image/gif;base64,R0lG)"></div>)~", "https://x.com").empty());
  // background shorthand is not a background-image declaration
  EXPECT_TRUE(find_images(R"~(<div style="background: url(x.png)"></div>)~", "https://x.com").empty());
}

TEST(FindImages, DocumentOrderAndRelativeResolution) {
  const char* html = R"~(<html><body>
    <div><img src="img/one.png"></div>
    <section style="color:red; BACKGROUND-IMAGE : url( &quot;../two.jpg&quot; )"><p>x</p></section>
    <img src='//cdn.test/three.gif?x=1'>
  </body></html>)~";
  auto refs = find_images(html, "https://x.com/dir/page.html");
  ASSERT_EQ(refs.size(), 3u);
  EXPECT_EQ(refs[0].url, "https://x.com/dir/img/one.png");
  EXPECT_EQ(refs[1].url, "https://x.com/two.jpg");
  EXPECT_EQ(refs[1].source_kind, ImageSource::css_background);
  EXPECT_EQ(refs[2].url, "https://cdn.test/three.gif?x=1");
}

TEST(FindImages, HonoursBaseElement) {
  auto refs = find_images(R"(<head><base href="https://static.test/assets/"></head><img src="a.png">)", "https://x.com/p");
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(refs[0].url, "https://static.test/assets/a.png");
}

TEST(ExtractContext, AltPlusSiblingHeading) {
  const std::string html = R"(<div><img src="bike.jpg" alt="red bicycle"><h2>City rides</h2></div>)";
  auto refs = find_images(html, "https://x.com/");
  ASSERT_EQ(refs.size(), 1u);
  auto ctx = extract_context(html, refs[0]);
  EXPECT_EQ(ctx.combined_prompt, "red bicycle; City rides");
  EXPECT_EQ(ctx.alt_text, "red bicycle");
  EXPECT_EQ(ctx.heading_texts, (std::vector<std::string>{"City rides"}));
  EXPECT_TRUE(ctx.paragraph_texts.empty());
}

TEST(ExtractContext, NoAltNoText) {
  const std::string html = R"(<body><span><img src="x.png"></span><p>outside any div</p></body>)";
  auto refs = find_images(html, "https://x.com/");
  auto ctx = extract_context(html, refs.at(0));
  EXPECT_EQ(ctx.combined_prompt, "");
  EXPECT_FALSE(ctx.alt_text.has_value());
}

TEST(ExtractContext, StopRuleAtSharedGrandparent) {
  // Hand trace: image A's div collects "Alpha"; its parent div also holds
  // image B, so the ascent stops there. Symmetric for B.
  const std::string html = R"(
    <div id="grand">
      <h1>Shared title</h1>
      <div id="a"><img src="a.png"><h3>Alpha</h3></div>
      <div id="b"><img src="b.png"><h3>Beta</h3></div>
    </div>)";
  auto refs = find_images(html, "https://x.com/");
  ASSERT_EQ(refs.size(), 2u);
  EXPECT_EQ(extract_context(html, refs[0]).combined_prompt, "Alpha");
  EXPECT_EQ(extract_context(html, refs[1]).combined_prompt, "Beta");
}

TEST(ExtractContext, AscendsUntilAnotherImage) {
  // a.png: own div -> "Caption A"; parent div#mid holds no other image -> adds
  // "Mid para" and the h2; div#top also holds b.png -> stop.
  const std::string html = R"(
    <div id="top">
      <div id="mid">
        <h2>Section <em>heading</em></h2>
        <div><img src="a.png" alt="  sunset   over hills "><p>Caption A</p></div>
        <p>Mid para</p>
      </div>
      <div><img src="b.png"></div>
      <p>Top para</p>
    </div>)";
  auto refs = find_images(html, "https://x.com/");
  auto ctx = extract_context(html, refs.at(0));
  EXPECT_EQ(ctx.combined_prompt, "sunset over hills; Section heading; Caption A; Mid para");
  EXPECT_EQ(ctx.heading_texts, (std::vector<std::string>{"Section heading"}));
  EXPECT_EQ(ctx.paragraph_texts, (std::vector<std::string>{"Caption A", "Mid para"}));
}

TEST(ExtractContext, DeduplicatesAndNormalizes) {
  const std::string html = "<div><img src=a.png alt='Golden Gate'><h3>Golden   Gate</h3><p>\n Golden Gate \n</p><p>Bay</p><p>Bay</p></div>";
  auto refs = find_images(html, "https://x.com/");
  EXPECT_EQ(extract_context(html, refs.at(0)).combined_prompt, "Golden Gate; Bay");
}

TEST(ExtractContext, OnlyListedTagsContribute) {
  const std::string html = R"(<div><img src=a.png><span>span text</span><a href=#>link</a><h5>h5</h5>
      <p>para with <a href="#">nested link</a> and <span>span</span></p><h4>four</h4></div>)";
  auto refs = find_images(html, "https://x.com/");
  EXPECT_EQ(extract_context(html, refs.at(0)).combined_prompt, "para with nested link and span; four");
}

TEST(ExtractContext, CssBackgroundDivIsItsOwnImageDiv) {
  const std::string html = R"~(<div><div style="background-image:url(hero.jpg)"><h1>Welcome</h1></div><p>Below</p></div>)~";
  auto refs = find_images(html, "https://x.com/");
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(extract_context(html, refs[0]).combined_prompt, "Welcome; Below");
}

TEST(ExtractContext, InvalidNodePath) {
  ImageRef bad{"https://x.com/a.png", ImageSource::img_src, {5, 2}};
  try {
    extract_context("<div><img src=a.png></div>", bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidNodePath);
  }
  ImageRef empty{"x", ImageSource::img_src, {}};
  EXPECT_THROW(extract_context("<div></div>", empty), Error);
}

TEST(ExtractContext, LenientParsing) {
  // Unclosed tags, stray end tags, unquoted attributes and a script containing markup.
  const std::string html = R"(<div><p>First<div><img src=a.png alt=kitten></span></div><script>var s = "<img src=x.png>";</script><h2>Cats</div>)";
  auto refs = find_images(html, "https://x.com/");
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(extract_context(html, refs[0]).combined_prompt, "kitten; First; Cats");
}

TEST(BuildServerPrompt, CaptionFirst) {
  ContextExtract ctx;
  ctx.combined_prompt = "Golden Gate at dusk";
  EXPECT_EQ(build_server_prompt(ctx, "a bridge with clouds"), "a bridge with clouds; Golden Gate at dusk");
}

TEST(BuildServerPrompt, EmptyContextAndWhitespace) {
  EXPECT_EQ(build_server_prompt(ContextExtract{}, "a bridge with some clouds in the background"),
            "a bridge with some clouds in the background");
  ContextExtract ctx;
  ctx.combined_prompt = "Golden Gate  ";
  EXPECT_EQ(build_server_prompt(ctx, "a bridge   "), "a bridge; Golden Gate");
  try {
    build_server_prompt(ctx, "  ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCaption);
  }
}

class FailingOnSecond final : public Captioner {
 public:
  std::string caption(std::string_view bytes) override {
    if (++calls_ == 2) throw Error(ErrorKind::BackendUnavailable, "http://captioner.test/: timeout");
    return stub_caption(bytes);
  }

 private:
  int calls_ = 0;
};

PageArchive two_image_archive() {
  using testing::make_har;
  const std::string html = R"(<html><body>
    <div><img src="a.png" alt="a red bicycle"><h2>City rides</h2></div>
    <div><img src="b.png"><p>Harbour at night</p></div>
  </body></html>)";
  return import_har(make_har({{"http://x.test/", "text/html", html},
                              {"http://x.test/a.png", "image/png", testing::tiny_png(16, 16, 1)},
                              {"http://x.test/b.png", "image/png", testing::tiny_png(16, 16, 2)}}),
                    "http://x.test/")
      .archive;
}

TEST(AnnotateArchive, ClientOnlyWithoutCaptioner) {
  auto r = annotate_archive(two_image_archive());
  ASSERT_EQ(r.archive.images.size(), 2u);
  EXPECT_EQ(r.archive.images[0].client_prompt, "a red bicycle; City rides");
  EXPECT_EQ(r.archive.images[1].client_prompt, "Harbour at night");
  EXPECT_FALSE(r.archive.images[0].server_prompt);
  EXPECT_FALSE(r.archive.images[1].caption);
}

TEST(AnnotateArchive, StubCaptionerFillsServerPrompts) {
  StubCaptioner cap;
  auto r = annotate_archive(two_image_archive(), &cap);
  for (const auto& img : r.archive.images) {
    ASSERT_TRUE(img.caption);
    ASSERT_TRUE(img.server_prompt);
    EXPECT_TRUE(img.caption->starts_with("a generated scene "));
    EXPECT_EQ(*img.server_prompt, *img.caption + "; " + *img.client_prompt);
  }
  EXPECT_NO_THROW(validate(r.archive));
}

TEST(AnnotateArchive, CaptionerFailureIsPerImage) {
  FailingOnSecond cap;
  auto r = annotate_archive(two_image_archive(), &cap);
  EXPECT_TRUE(r.archive.images[0].server_prompt);
  EXPECT_FALSE(r.archive.images[1].caption);
  EXPECT_FALSE(r.archive.images[1].server_prompt);
  EXPECT_EQ(r.archive.images[1].client_prompt, "Harbour at night");
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(AnnotateArchive, Idempotent) {
  StubCaptioner cap;
  auto once = annotate_archive(two_image_archive(), &cap).archive;
  EXPECT_EQ(annotate_archive(once, &cap).archive, once);
  EXPECT_EQ(annotate_archive(once).archive, once);
}

TEST(AnnotateArchive, ImageNotInMarkupGetsEmptyPrompt) {
  using testing::make_har;
  auto a = import_har(make_har({{"http://x.test/", "text/html", "<div><h1>Title</h1></div>"},
                                {"http://x.test/lazy.png", "image/png", testing::tiny_png()}}),
                      "http://x.test/")
               .archive;
  auto r = annotate_archive(a);
  EXPECT_EQ(r.archive.images[0].client_prompt, std::string());
}

// ---- property tests -------------------------------------------------------

struct GeneratedPage {
  std::string html;
  std::string noisy_html;
};

/// Nested divs around one image, each level with a few p/h texts; the noisy
/// variant adds content that is neither an image nor inside a context tag,
/// plus arbitrary content after the outermost div.
GeneratedPage random_page(std::mt19937_64& rng) {
  const char* tags[] = {"p", "h1", "h2", "h3", "h4"};
  const int depth = 1 + int(rng() % 4);
  auto texts = [&](int level, bool noisy) {
    std::string s;
    const int n = int(rng() % 3);
    for (int i = 0; i < n; ++i) {
      const char* t = tags[rng() % 5];
      s += "<" + std::string(t) + ">L" + std::to_string(level) + " text " + std::to_string(rng() % 5) + "</" + t + ">";
    }
    if (noisy) s += "<span>noise " + std::to_string(rng()) + "</span><ul><li>item</li></ul>loose text";
    return s;
  };
  std::vector<std::string> before(depth), after(depth);
  std::vector<std::string> noisy_before(depth), noisy_after(depth);
  for (int level = 0; level < depth; ++level) {
    before[level] = texts(level, false);
    after[level] = texts(level, false);
    noisy_before[level] = "<em>n</em>" + before[level];
    noisy_after[level] = after[level] + "<span>tail " + std::to_string(rng() % 100) + "</span>";
  }
  auto build = [&](const std::vector<std::string>& b, const std::vector<std::string>& a, bool noisy) {
    std::string s;
    for (int level = 0; level < depth; ++level) s += "<div>" + b[level];
    s += "<img src=\"target.png\" alt=\"alt " + std::to_string(depth) + "\">";
    for (int level = depth - 1; level >= 0; --level) s += a[level] + "</div>";
    if (noisy) s += "<footer><p>Footer text</p><h2>Outside</h2></footer>";
    return s;
  };
  return {build(before, after, false), build(noisy_before, noisy_after, true)};
}

TEST(AnnotateProperties, DeterministicAndLocal) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto page = random_page(rng);
    const auto refs = find_images(page.html, "https://x.com/");
    const auto noisy_refs = find_images(page.noisy_html, "https://x.com/");
    ASSERT_EQ(refs.size(), 1u);
    ASSERT_EQ(noisy_refs.size(), 1u);
    const auto ctx = extract_context(page.html, refs[0]);
    ASSERT_EQ(extract_context(page.html, refs[0]), ctx);
    ASSERT_EQ(extract_context(page.noisy_html, noisy_refs[0]).combined_prompt, ctx.combined_prompt) << page.noisy_html;
  }
}

TEST(AnnotateProperties, SecondImageTruncatesAscent) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto page = random_page(rng);
    const auto full = extract_context(page.html, find_images(page.html, "https://x.com/").at(0));
    // Insert a second image right after the k-th opening <div>.
    std::vector<std::size_t> opens;
    for (std::size_t p = page.html.find("<div>"); p != std::string::npos; p = page.html.find("<div>", p + 1)) opens.push_back(p);
    const std::size_t k = rng() % opens.size();
    std::string modified = page.html;
    modified.insert(opens[k] + 5, "<div><img src=\"other.png\"></div>");
    const auto refs = find_images(modified, "https://x.com/");
    ASSERT_EQ(refs.size(), 2u);
    const auto& target = refs[0].url.ends_with("target.png") ? refs[0] : refs[1];
    const auto cut = extract_context(modified, target);
    const auto full_parts = split_prompt(full.combined_prompt);
    const std::set<std::string> full_set(full_parts.begin(), full_parts.end());
    for (const auto& part : split_prompt(cut.combined_prompt)) ASSERT_TRUE(full_set.contains(part)) << part;
    ASSERT_EQ(cut.alt_text, full.alt_text);
    ASSERT_LE(cut.combined_prompt.size(), full.combined_prompt.size());
  }
}

}  // namespace
}  // namespace webforge
