#include "cli/common.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "dustk/ckptio.hpp"
#include "dustk/errors.hpp"

namespace dustk::cli {

void OutputTarget::add_to(CLI::App& cmd) {
  auto* out = cmd.add_option("--out", path, "Output file");
  auto* std_out = cmd.add_flag("--stdout", to_stdout, "Write data to stdout");
  out->excludes(std_out);
}

void OutputTarget::write(const std::string& content) const {
  if (to_stdout || path.empty()) {
    std::cout << content << std::flush;
  } else {
    write_file(path, content);
  }
}

std::vector<std::string> OutputTarget::files() const {
  if (to_stdout || path.empty()) return {};
  return {path};
}

void log(const std::string& message) { std::cerr << message << '\n'; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << content;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::string to_jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::vector<std::string> checkpoint_files(const std::string& path) {
  const auto p = CheckpointPaths::resolve(path);
  return {p.tensors.string(), p.config.string()};
}

Checkpoint load(const std::string& path, bool strict) { return load_checkpoint(path, strict); }

void save(const Checkpoint& ckpt, const std::string& path) {
  const auto p = CheckpointPaths::resolve(path);
  if (p.tensors.has_parent_path()) std::filesystem::create_directories(p.tensors.parent_path());
  save_checkpoint(ckpt, path);
  log("wrote " + p.tensors.string());
}

std::string checkpoint_anchor(const std::string& path) {
  auto t = CheckpointPaths::resolve(path).tensors;
  return t.replace_extension().string();
}

void write_manifest(const Context& ctx, std::vector<std::string> inputs,
                    std::vector<std::string> outputs, const std::string& anchor) {
  RunManifest m;
  m.command_line = ctx.command_line;
  m.inputs = std::move(inputs);
  m.outputs = std::move(outputs);
  m.finalize();
  if (anchor.empty()) {
    std::cerr << m.to_json().dump() << '\n';
  } else {
    write_file(anchor + ".manifest.json", m.to_json().dump(2) + "\n");
  }
}

}  // namespace dustk::cli
