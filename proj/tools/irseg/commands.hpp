#pragma once

#include <string>
#include <vector>

#include "irseg/config.hpp"
#include "irseg/error.hpp"
#include "irseg/pipeline.hpp"
#include "irseg/synth.hpp"

namespace irseg::cli {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

int exit_code(ErrorKind kind);
/// `error code=<tag> kind=<usage|data|numerical> message="<text>"`
std::string error_line(const Error& e);

/// Runs one CLI invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args);

// Config -> typed settings. Relative paths resolve against `base_dir`.
PipelineOptions pipeline_options(const Config& c);
SceneConfig scene_config(const Config& c);
ModelGrid model_grid(const Config& c);
std::vector<double> lambda_grid(const Config& c);

}  // namespace irseg::cli
