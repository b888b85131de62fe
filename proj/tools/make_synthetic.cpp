// Writes a synthetic task (probe sets + manifest) for demos and smoke tests.
#include <iostream>

#include <CLI11.hpp>

#include "xfer/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic transferability task", "xferbench-synth"};
  xfer::synthetic::TaskSpec spec;
  std::string out;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--task", spec.task)->capture_default_str();
  app.add_option("--separations", spec.separations, "Class separation per checkpoint")->capture_default_str();
  app.add_option("--classes", spec.classes)->capture_default_str();
  app.add_option("--samples-per-class", spec.samples_per_class)->capture_default_str();
  app.add_option("--dim", spec.dim)->capture_default_str();
  app.add_option("--source-classes", spec.source_classes)->capture_default_str();
  app.add_option("--seed", spec.seed)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto manifest = xfer::synthetic::write_task(spec, out);
    std::cout << manifest.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
