#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dustk/checkpoint.hpp"
#include "dustk/manifest.hpp"
#include "json.hpp"

namespace dustk::cli {

struct Context {
  std::string command_line;
};

// Where a command's data goes: a file, or stdout with --stdout.
struct OutputTarget {
  std::string path;
  bool to_stdout = false;

  void add_to(CLI::App& cmd);
  void write(const std::string& content) const;
  std::vector<std::string> files() const;
};

void log(const std::string& message);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);
nlohmann::json read_json(const std::filesystem::path& path);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<nlohmann::json>& rows);

// Both files of a checkpoint pair.
std::vector<std::string> checkpoint_files(const std::string& path);
Checkpoint load(const std::string& path, bool strict = true);
void save(const Checkpoint& ckpt, const std::string& path);

// Writes the manifest beside `anchor` (anchor + ".manifest.json"), or to
// stderr when anchor is empty.
void write_manifest(const Context& ctx, std::vector<std::string> inputs,
                    std::vector<std::string> outputs, const std::string& anchor);
// Manifest anchor for a checkpoint output: its path without ".safetensors".
std::string checkpoint_anchor(const std::string& path);

void add_model_commands(CLI::App& app, Context& ctx);
void add_train_commands(CLI::App& app, Context& ctx);
void add_data_commands(CLI::App& app, Context& ctx);

}  // namespace dustk::cli
