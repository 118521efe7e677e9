#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <torch/torch.h>

#include "atriaqc/log_sink.hpp"

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  atriaqc::logging::set_level(atriaqc::logging::Level::Warn);
  doctest::Context context(argc, argv);
  return context.run();
}
