#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace webforge::testing {

struct PacCase {
  bool image = false;
  std::string url;
};

inline std::vector<PacCase> load_pac_cases(const std::filesystem::path& file) {
  std::vector<PacCase> out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    out.push_back({line.substr(0, sp) == "image", line.substr(sp + 1)});
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Evaluates FindProxyForURL from `pac` under node for every URL. Returns
/// nullopt when node is not available.
inline std::optional<std::vector<std::string>> eval_pac_with_node(const std::string& pac,
                                                                  const std::vector<std::string>& urls,
                                                                  const std::filesystem::path& scratch) {
  if (std::system("node --version > /dev/null 2>&1") != 0) return std::nullopt;
  const auto pac_file = scratch / "proxy.pac";
  const auto url_file = scratch / "urls.txt";
  const auto driver = scratch / "driver.js";
  std::ofstream(pac_file, std::ios::binary) << pac;
  {
    std::ofstream u(url_file);
    for (const auto& url : urls) u << url << '\n';
  }
  std::ofstream(driver) << R"JS(
const fs = require('fs');
const vm = require('vm');
const sandbox = {};
vm.createContext(sandbox);
vm.runInContext(fs.readFileSync(process.argv[2], 'utf8'), sandbox);
const urls = fs.readFileSync(process.argv[3], 'utf8').split('\n').filter(Boolean);
for (const u of urls) {
  const host = (u.match(/^[a-z]+:\/\/([^\/:?#]*)/i) || [, ''])[1];
  console.log(sandbox.FindProxyForURL(u, host));
}
)JS";
  const std::string cmd = "node '" + driver.string() + "' '" + pac_file.string() + "' '" + url_file.string() + "'";
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return std::nullopt;
  std::string output;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) output.append(buf, n);
  if (::pclose(p) != 0) return std::nullopt;
  std::vector<std::string> results;
  std::istringstream lines(output);
  std::string line;
  while (std::getline(lines, line)) results.push_back(line);
  return results;
}

}  // namespace webforge::testing
