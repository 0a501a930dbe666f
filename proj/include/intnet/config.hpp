#pragma once

#include <string>

#include "intnet/data.hpp"
#include "intnet/model.hpp"
#include "intnet/train.hpp"

namespace intnet {

// Everything one run needs, read from a sectioned key=value file. Relative
// paths resolve against the config file's directory; the resolved form is
// echoed as JSON into the run directory.
struct ExperimentConfig {
  CorpusPaths data;
  std::string embeddings_path;  // optional
  TaskKind task = TaskKind::ner;
  ModelSpec model;
  TrainConfig train;
  std::string output_dir = "runs/default";

  static ExperimentConfig from_file(const std::string& path);
  std::string to_json() const;
  void validate() const;
};

}  // namespace intnet
