#include "webforge/cli.hpp"

#include <CLI11.hpp>
#include <pthread.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "webforge/annotate.hpp"
#include "webforge/archive.hpp"
#include "webforge/digest.hpp"
#include "webforge/error.hpp"
#include "webforge/evaluate.hpp"
#include "webforge/genclient.hpp"
#include "webforge/metrics.hpp"
#include "webforge/pac.hpp"
#include "webforge/proxy.hpp"
#include "webforge/shaper.hpp"
#include "webforge/study.hpp"

namespace webforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BackendUnavailable:
    case ErrorKind::BackendRejectedPrompt:
    case ErrorKind::MalformedImagePayload:
    case ErrorKind::PortInUse:
    case ErrorKind::ProviderUnavailable:
    case ErrorKind::Unauthorized:
    case ErrorKind::Io:
      return false;
    default:
      return true;
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), std::streamsize(data.size()));
  if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(read_file(p));
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

ConnectivityProfile profile_arg(const std::string& spec) {
  auto p = ConnectivityProfile::parse(spec);
  if (!p) throw Error(ErrorKind::InvalidArgument, "unknown profile " + spec + " (slow, average, fast, custom:<mbps>:<rtt_ms>)");
  return *p;
}

LatencyProfile latency_arg(const std::string& spec) {
  auto p = LatencyProfile::parse(spec);
  if (!p) throw Error(ErrorKind::InvalidArgument, "unknown latency profile " + spec + " (v100, a40, a100, custom:<ms>[:<jitter>])");
  return *p;
}

ServeMode serve_mode_arg(const std::string& mode, const std::string& hybrid_file) {
  auto m = parse_mode(mode);
  if (!m) throw Error(ErrorKind::InvalidArgument, "unknown mode " + mode);
  ServeMode out{*m, {}};
  if (*m == Mode::hybrid) {
    if (hybrid_file.empty()) throw Error(ErrorKind::InvalidArgument, "hybrid mode needs --hybrid-urls");
    for (auto& url : read_lines(hybrid_file)) out.hybrid_urls.insert(url);
  }
  return out;
}

std::shared_ptr<ImageGenerator> generator_arg(const std::string& spec, const std::string& latency, std::uint64_t seed) {
  if (spec == "stub") {
    if (latency.empty()) return std::make_shared<StubGenerator>();
    return std::make_shared<StubGenerator>(latency_arg(latency), seed);
  }
  return std::make_shared<HttpGenerator>(spec);
}

std::unique_ptr<Captioner> captioner_arg(const std::string& spec) {
  if (spec == "stub") return std::make_unique<StubCaptioner>();
  return std::make_unique<HttpCaptioner>(spec);
}

std::unique_ptr<EmbeddingProvider> embedder_arg(const std::string& spec) {
  if (spec == "stub") return std::make_unique<StubEmbeddingProvider>();
  return std::make_unique<HttpEmbeddingProvider>(spec);
}

sigset_t shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

// Blocks the shutdown signals in this thread (and threads it starts later)
// so they can be collected with sigwait.
void prepare_wait(const Env& env) {
  if (env.wait_for_shutdown) return;
  const sigset_t set = shutdown_signals();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

void wait(const Env& env) {
  if (env.wait_for_shutdown) {
    env.wait_for_shutdown();
    return;
  }
  const sigset_t set = shutdown_signals();
  int sig = 0;
  sigwait(&set, &sig);
}

struct Options {
  // shared
  std::uint64_t seed = 0;
  bool random_seed = false;
  // import-har
  std::string har, page_url, out;
  // archive commands
  std::string archive;
  std::vector<std::string> archives;
  std::string captioner = "stub";
  std::string generator = "stub";
  std::string embedder = "stub";
  std::string mode = "generated_server";
  std::string hybrid_urls;
  std::string image;
  // serve
  std::string host = "127.0.0.1";
  int content_port = 8080;
  int image_port = 8081;
  std::string miss_policy = "404";
  std::string profile;
  std::string latency;
  std::string pac_out;
  // bench
  bool simulate = false;
  std::vector<std::string> ingest;
  int runs = 5;
  std::string delta_mode = "delta_of_medians";
  int connections = 6;
  int slots = 1;
  // report / study
  std::string tasks, data_dir, media_root, type = "images", secret = "webforge";
  std::size_t quota = 10;
  int port = 8090;
  bool agreement = false;
};

std::uint64_t effective_seed(const Options& o, Env& env) {
  if (!o.random_seed) return o.seed;
  const std::uint64_t s = std::random_device{}() | (std::uint64_t(std::random_device{}()) << 32);
  env.err << "using random seed " << s << "\n";
  return s;
}

int cmd_import_har(const Options& o, Env& env) {
  auto result = import_har(std::string_view(read_file(o.har)), o.page_url);
  for (const auto& w : result.warnings) env.err << "warning: " << w << "\n";
  save(result.archive, o.out);
  env.out << "archived " << result.archive.entries.size() << " entries (" << result.archive.images.size()
          << " images) to " << o.out << "\n";
  return kExitOk;
}

int cmd_annotate(const Options& o, Env& env) {
  auto archive = load(o.archive);
  std::unique_ptr<Captioner> captioner;
  if (o.captioner != "none") captioner = captioner_arg(o.captioner);
  auto result = annotate_archive(archive, captioner.get());
  for (const auto& w : result.warnings) env.err << "warning: " << w << "\n";
  save(result.archive, o.archive);
  std::size_t with_server = 0;
  for (const auto& img : result.archive.images) with_server += img.server_prompt.has_value();
  env.out << "annotated " << result.archive.images.size() << " images (" << with_server << " with server prompts)\n";
  return kExitOk;
}

int cmd_caption(const Options& o, Env& env) {
  env.out << captioner_arg(o.captioner)->caption(read_file(o.image)) << "\n";
  return kExitOk;
}

int cmd_pregenerate(const Options& o, Env& env) {
  const auto archive = load(o.archive);
  const auto mode = serve_mode_arg(o.mode, o.hybrid_urls);
  const std::uint64_t seed = effective_seed(o, env);
  auto gen = generator_arg(o.generator, o.latency, seed);
  GenerationConfig base;
  base.seed = seed;
  json index = json::object();
  for (const auto& img : archive.images) {
    auto prompt = substitution_prompt(mode, img);
    if (!prompt) continue;
    GenerationConfig cfg = base;
    cfg.width = backend_side(img.width);
    cfg.height = backend_side(img.height);
    auto out = gen->generate(*prompt, cfg);
    const std::string name = sha256_hex(img.url).substr(0, 16) + ".png";
    write_file(fs::path(o.out) / name, out.png);
    index[img.url] = {{"file", name}, {"prompt", *prompt}, {"width", cfg.width}, {"height", cfg.height}};
  }
  write_file(fs::path(o.out) / "images.json", index.dump(2) + "\n");
  env.out << "generated " << index.size() << " images into " << o.out << "\n";
  return kExitOk;
}

int cmd_serve(const Options& o, Env& env) {
  ProxyPairConfig cfg;
  cfg.host = o.host;
  cfg.content_port = o.content_port;
  cfg.image_port = o.image_port;
  cfg.archive = load(o.archive);
  cfg.serve_mode = serve_mode_arg(o.mode, o.hybrid_urls);
  auto miss = parse_miss_policy(o.miss_policy);
  if (!miss) throw Error(ErrorKind::InvalidArgument, "miss policy must be 404 or 502");
  cfg.miss_policy = *miss;
  if (!o.profile.empty()) cfg.shaping = profile_arg(o.profile);
  const std::uint64_t seed = effective_seed(o, env);
  cfg.generation.seed = seed;
  auto gen = generator_arg(o.generator, o.latency, seed);
  prepare_wait(env);
  auto pair = ProxyPair::start(std::move(cfg), gen);
  const std::string pac = pair->pac();
  if (!o.pac_out.empty()) write_file(o.pac_out, pac);
  env.out << "content proxy on " << o.host << ":" << pair->content_port() << "\n"
          << "image proxy on " << o.host << ":" << pair->image_port() << "\n";
  if (o.pac_out.empty()) env.out << pac;
  env.out.flush();
  wait(env);
  pair->shutdown();
  return kExitOk;
}

int cmd_bench(const Options& o, Env& env) {
  if (o.simulate == !o.ingest.empty()) {
    throw Error(ErrorKind::InvalidArgument, "bench needs exactly one of --simulate or --ingest");
  }
  if (o.runs < 1) throw Error(ErrorKind::InvalidArgument, "--runs must be >= 1");
  const DeltaMode dmode = o.delta_mode == "median_of_deltas" ? DeltaMode::median_of_deltas
                          : o.delta_mode == "delta_of_medians"
                              ? DeltaMode::delta_of_medians
                              : throw Error(ErrorKind::InvalidArgument, "unknown delta mode " + o.delta_mode);
  std::vector<LoadMetrics> runs;
  if (o.simulate) {
    if (o.archives.empty()) throw Error(ErrorKind::InvalidArgument, "--simulate needs at least one archive");
    const auto profile = profile_arg(o.profile.empty() ? "average" : o.profile);
    const auto latency = latency_arg(o.latency.empty() ? "a100" : o.latency);
    SimParams params;
    params.parallel_connections = o.connections;
    params.generation_slots = o.slots;
    params.serve_mode = serve_mode_arg(o.mode, o.hybrid_urls);
    params.seed = effective_seed(o, env);
    for (const auto& dir : o.archives) {
      auto page = simulate_runs(load(dir), profile, latency, o.runs, params);
      runs.insert(runs.end(), page.begin(), page.end());
    }
  } else {
    for (const auto& file : o.ingest) {
      auto page = ingest_report(std::string_view(read_file(file)));
      runs.insert(runs.end(), page.begin(), page.end());
    }
  }
  auto si = compute_deltas(runs, Metric::si, dmode);
  auto plt = compute_deltas(runs, Metric::plt, dmode);
  std::vector<MetricDelta> all = si;
  all.insert(all.end(), plt.begin(), plt.end());
  std::vector<double> si_values, plt_values;
  for (const auto& d : si) si_values.push_back(d.delta_ms);
  for (const auto& d : plt) plt_values.push_back(d.delta_ms);

  const fs::path out = o.out.empty() ? fs::path(".") : fs::path(o.out);
  write_file(out / "deltas.csv", deltas_csv(all));
  write_file(out / "si_delta_cdf.csv", cdf_csv(empirical_cdf(si_values), "si_delta_ms"));
  write_file(out / "plt_delta_cdf.csv", cdf_csv(empirical_cdf(plt_values), "plt_delta_ms"));
  json reports = json::array();
  std::map<std::string, std::vector<LoadMetrics>> by_page;
  for (const auto& r : runs) by_page[r.page_url].push_back(r);
  for (const auto& [page, page_runs] : by_page) reports.push_back(report_json(page_runs));
  write_file(out / "runs.json", reports.dump(2) + "\n");
  env.out << deltas_csv(all);
  return kExitOk;
}

int cmd_savings(const Options& o, Env& env) {
  const auto archive = load(o.archive);
  env.out << bandwidth_savings(archive, serve_mode_arg(o.mode, o.hybrid_urls)) << "\n";
  return kExitOk;
}

int cmd_report(const Options& o, Env& env) {
  if (o.agreement) {
    if (o.archives.empty()) throw Error(ErrorKind::InvalidArgument, "--agreement needs archives");
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& dir : o.archives) {
      for (const auto& img : load(dir).images) {
        if (img.client_prompt && img.server_prompt) pairs.emplace_back(*img.client_prompt, *img.server_prompt);
      }
    }
    auto provider = embedder_arg(o.embedder);
    const auto s = agreement_stats(pairs, *provider);
    for (const auto& w : s.warnings) env.err << "warning: " << w << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "n,median,mean,p25,p75\n%zu,%.6f,%.6f,%.6f,%.6f\n", s.n, s.median, s.mean, s.p25, s.p75);
    env.out << buf;
    return kExitOk;
  }
  if (o.tasks.empty() || o.data_dir.empty()) {
    throw Error(ErrorKind::InvalidArgument, "report needs --tasks and --data-dir (or --agreement)");
  }
  const auto type = TaskType::parse(o.type);
  if (!type) throw Error(ErrorKind::InvalidArgument, "unknown type " + o.type);
  StudyConfig cfg;
  cfg.data_dir = o.data_dir;
  cfg.secret = o.secret;
  cfg.quota = o.quota;
  Study study(parse_tasks(json::parse(read_file(o.tasks))), cfg);
  const auto r = study.results(*type);
  const fs::path out = o.out.empty() ? fs::path(".") : fs::path(o.out);
  write_file(out / "summaries.csv", summaries_csv(r.summaries));
  write_file(out / "median_cdf.csv", cdf_csv(r.cdf, "median_score"));
  write_file(out / "tag_boxplots.csv", boxplots_csv(r.boxplots));
  write_file(out / "results.json", results_json(r).dump(2) + "\n");
  env.out << summaries_csv(r.summaries);
  return kExitOk;
}

int cmd_study_serve(const Options& o, Env& env) {
  StudyConfig cfg;
  cfg.quota = o.quota;
  cfg.seed = effective_seed(o, env);
  cfg.secret = o.secret;
  cfg.data_dir = o.data_dir;
  Study study(parse_tasks(json::parse(read_file(o.tasks))), cfg);
  prepare_wait(env);
  StudyServer server(study, {o.host, o.port, o.media_root});
  env.out << "study service on " << o.host << ":" << server.port() << " with " << study.tasks().size() << " tasks\n";
  env.out.flush();
  wait(env);
  server.stop();
  return kExitOk;
}

int cmd_lint_pac(const Options& o, Env& env) {
  const auto archive = load(o.archive);
  std::size_t unmatched = 0;
  for (const auto& img : archive.images) {
    if (!pac::routes_to_image_proxy(img.url)) {
      env.out << "unmatched: " << img.url << "\n";
      ++unmatched;
    }
  }
  env.out << unmatched << " of " << archive.images.size() << " manifest images bypass the image proxy\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, Env& env) {
  CLI::App app{"Record, annotate and replay web pages with generated images", "webforge"};
  app.require_subcommand(1);
  Options o;

  auto seeded = [&o](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
    sub->add_flag("--random-seed", o.random_seed, "Draw a fresh seed and print it");
  };
  auto moded = [&o](CLI::App* sub) {
    sub->add_option("--mode", o.mode, "original, generated_client, generated_server or hybrid")->capture_default_str();
    sub->add_option("--hybrid-urls", o.hybrid_urls, "File listing image URLs to substitute in hybrid mode");
  };

  auto* import_cmd = app.add_subcommand("import-har", "Build an archive from a HAR capture");
  import_cmd->add_option("har", o.har, "HAR file")->required();
  import_cmd->add_option("--page-url", o.page_url, "URL of the root document")->required();
  import_cmd->add_option("--out", o.out, "Archive directory")->required();

  auto* annotate_cmd = app.add_subcommand("annotate", "Extract prompts for every archived image");
  annotate_cmd->add_option("archive", o.archive, "Archive directory")->required();
  annotate_cmd->add_option("--captioner", o.captioner, "stub, none or an http:// endpoint")->capture_default_str();

  auto* caption_cmd = app.add_subcommand("caption", "Caption one image file");
  caption_cmd->add_option("image", o.image, "Image file")->required();
  caption_cmd->add_option("--captioner", o.captioner, "stub or an http:// endpoint")->capture_default_str();

  auto* pregen_cmd = app.add_subcommand("pregenerate", "Generate every substituted image to disk");
  pregen_cmd->add_option("archive", o.archive, "Archive directory")->required();
  pregen_cmd->add_option("--out", o.out, "Output directory")->required();
  pregen_cmd->add_option("--generator", o.generator, "stub or an http:// endpoint")->capture_default_str();
  pregen_cmd->add_option("--latency", o.latency, "Stub latency profile (v100, a40, a100, custom:<ms>[:<jitter>])");
  moded(pregen_cmd);
  seeded(pregen_cmd);

  auto* serve_cmd = app.add_subcommand("serve", "Run the content and image proxies over an archive");
  serve_cmd->add_option("archive", o.archive, "Archive directory")->required();
  serve_cmd->add_option("--host", o.host)->capture_default_str();
  serve_cmd->add_option("--content-port", o.content_port)->capture_default_str();
  serve_cmd->add_option("--image-port", o.image_port)->capture_default_str();
  serve_cmd->add_option("--miss-policy", o.miss_policy, "404 or 502")->capture_default_str();
  serve_cmd->add_option("--profile", o.profile, "Shape the content proxy: slow, average, fast, custom:<mbps>:<rtt_ms>");
  serve_cmd->add_option("--generator", o.generator, "stub or an http:// endpoint")->capture_default_str();
  serve_cmd->add_option("--latency", o.latency, "Stub latency profile");
  serve_cmd->add_option("--pac-out", o.pac_out, "Write the PAC script here instead of stdout");
  moded(serve_cmd);
  seeded(serve_cmd);

  auto* bench_cmd = app.add_subcommand("bench", "Compute SI and PLT deltas from simulations or reports");
  bench_cmd->add_option("archives", o.archives, "Archive directories (with --simulate)");
  bench_cmd->add_flag("--simulate", o.simulate, "Simulate loads with the waterfall model");
  bench_cmd->add_option("--ingest", o.ingest, "Report files to ingest");
  bench_cmd->add_option("--profile", o.profile, "Connectivity profile (default average)");
  bench_cmd->add_option("--latency", o.latency, "Generation latency profile (default a100)");
  bench_cmd->add_option("--runs", o.runs, "Runs per arm")->capture_default_str();
  bench_cmd->add_option("--delta-mode", o.delta_mode, "delta_of_medians or median_of_deltas")->capture_default_str();
  bench_cmd->add_option("--connections", o.connections, "Parallel connections")->capture_default_str();
  bench_cmd->add_option("--slots", o.slots, "Generation slots")->capture_default_str();
  bench_cmd->add_option("--out", o.out, "Output directory for tables");
  moded(bench_cmd);
  seeded(bench_cmd);

  auto* savings_cmd = app.add_subcommand("savings", "Bytes not transferred when images are generated");
  savings_cmd->add_option("archive", o.archive, "Archive directory")->required();
  moded(savings_cmd);

  auto* report_cmd = app.add_subcommand("report", "Aggregate study scores or prompt agreement");
  report_cmd->add_option("--tasks", o.tasks, "Task file");
  report_cmd->add_option("--data-dir", o.data_dir, "Study data directory");
  report_cmd->add_option("--type", o.type, "Study type, e.g. images or scale_client")->capture_default_str();
  report_cmd->add_option("--out", o.out, "Output directory for tables");
  report_cmd->add_option("--quota", o.quota)->capture_default_str();
  report_cmd->add_flag("--agreement", o.agreement, "Client/server prompt agreement over archives");
  report_cmd->add_option("archives", o.archives, "Annotated archives (with --agreement)");
  report_cmd->add_option("--embedder", o.embedder, "stub or an http:// endpoint")->capture_default_str();

  auto* study_cmd = app.add_subcommand("study-serve", "Run the scoring service");
  study_cmd->add_option("--tasks", o.tasks, "Task file")->required();
  study_cmd->add_option("--data-dir", o.data_dir, "Where scores are stored")->required();
  study_cmd->add_option("--media-root", o.media_root, "Directory served under /media/");
  study_cmd->add_option("--host", o.host)->capture_default_str();
  study_cmd->add_option("--port", o.port)->capture_default_str();
  study_cmd->add_option("--secret", o.secret, "Bearer token for POST /scores")->capture_default_str();
  study_cmd->add_option("--quota", o.quota, "Responses per task")->capture_default_str();
  seeded(study_cmd);

  auto* lint_cmd = app.add_subcommand("lint-pac", "List manifest images the PAC rule does not route to the image proxy");
  lint_cmd->add_option("archive", o.archive, "Archive directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, env.out, env.err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*import_cmd) return cmd_import_har(o, env);
    if (*annotate_cmd) return cmd_annotate(o, env);
    if (*caption_cmd) return cmd_caption(o, env);
    if (*pregen_cmd) return cmd_pregenerate(o, env);
    if (*serve_cmd) return cmd_serve(o, env);
    if (*bench_cmd) return cmd_bench(o, env);
    if (*savings_cmd) return cmd_savings(o, env);
    if (*report_cmd) return cmd_report(o, env);
    if (*study_cmd) return cmd_study_serve(o, env);
    if (*lint_cmd) return cmd_lint_pac(o, env);
  } catch (const Error& e) {
    env.err << "error: " << e.what() << "\n";
    return validation_error(e.kind()) ? kExitValidation : kExitRuntime;
  } catch (const json::exception& e) {
    env.err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    env.err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace webforge::cli
