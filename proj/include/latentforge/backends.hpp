#pragma once

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <sys/wait.h>

#include "attributes.hpp"
#include "error.hpp"
#include "generator.hpp"
#include "hash.hpp"
#include "image_io.hpp"
#include "json_util.hpp"

namespace lf {

/// Runs `command` through the shell with `input` on stdin and returns its stdout.
/// Non-zero exit status raises.
inline std::string run_process(const std::string& command, const std::string& input) {
  char path[] = "/tmp/latentforge-XXXXXX";
  const int fd = ::mkstemp(path);
  if (fd < 0) throw Error("run_process: cannot create temp file");
  ::close(fd);
  struct Cleanup {
    const char* p;
    ~Cleanup() { std::remove(p); }
  } cleanup{path};
  write_file(path, input);

  const std::string full = command + " < '" + std::string(path) + "'";
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) throw Error("run_process: cannot start '" + command + "'");
  std::string out;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw Error("run_process: '" + command + "' failed with status " + std::to_string(status));
  return out;
}

/// Adapter for an out-of-process pretrained generator.
///
/// map_command reads {"z": [...]} and prints {"w": [...]}; synth_command reads
/// {"rows": [[...], ...]} and prints PNG bytes. Calls are serialized.
class ExternalGenerator final : public Generator {
 public:
  using Generator::synthesize;
  explicit ExternalGenerator(const GeneratorConfig& config) : config_(config) {
    config.validate();
    require(!config.map_command.empty() && !config.synth_command.empty(),
            "external generator needs map_command and synth_command");
  }

  GeneratorShape shape() const override { return config_.shape(); }

  IntermediateCode map_latent(const LatentCode& z) const override {
    require_shape(z.values.size() == config_.latent_dim, "map_latent: latent dimension mismatch");
    const Json request = {{"z", to_json_array(z.values)}};
    std::lock_guard lock(gate_);
    const Json reply = Json::parse(run_process(config_.map_command, request.dump()));
    IntermediateCode w(vector_from_json(reply.at("w")));
    require_shape(w.dim() == config_.latent_dim, "external map returned wrong dimension");
    return w;
  }

  Image synthesize(const ExtendedCode& code) const override {
    require_shape(code.layers() == config_.layers && code.dim() == config_.latent_dim,
                  "synthesize: code shape mismatch");
    Json rows = Json::array();
    for (Eigen::Index l = 0; l < code.layers(); ++l) rows.push_back(to_json_array(code.rows.row(l).transpose()));
    std::string bytes;
    {
      std::lock_guard lock(gate_);
      bytes = run_process(config_.synth_command, Json{{"rows", rows}}.dump());
    }
    Image image = decode_png(bytes);
    require_shape(image.height == config_.resolution && image.width == config_.resolution,
                  "external generator returned wrong resolution");
    return image;
  }

 private:
  GeneratorConfig config_;
  mutable std::mutex gate_;
};

/// Adapter for an out-of-process attribute classifier: PNG bytes on stdin, a JSON
/// label record on stdout. Calls are serialized.
class ExternalClassifier final : public Classifier {
 public:
  ExternalClassifier(std::string command, int classes) : command_(std::move(command)), classes_(classes) {
    require(!command_.empty(), "external classifier needs a command");
    require(classes_ >= 1, "external classifier needs a positive class count");
  }

  AttributeLabel classify(const Image& image) const override {
    const std::string png = encode_png(image);
    std::string reply;
    {
      std::lock_guard lock(gate_);
      reply = run_process(command_, png);
    }
    AttributeLabel label = label_from_json(Json::parse(reply));
    require(label.class_id >= 0 && label.class_id < classes_, "external classifier returned unknown class");
    return label;
  }

  int num_classes() const override { return classes_; }

 private:
  std::string command_;
  int classes_;
  mutable std::mutex gate_;
};

inline std::unique_ptr<Generator> make_generator(const GeneratorConfig& config) {
  config.validate();
  if (config.backend == "toy") return std::make_unique<ToyGenerator>(config);
  return std::make_unique<ExternalGenerator>(config);
}

}  // namespace lf
