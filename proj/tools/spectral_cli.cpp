#include <iostream>

#include <CLI11.hpp>

#include "spectral/cli.hpp"

int main(int argc, char **argv) {
  using namespace spectral;
  CLI::App app{"Spectral-transform CNN experiments"};
  app.require_subcommand(1);

  InitMatrixArgs im;
  std::vector<std::size_t> im_dims;
  auto *init = app.add_subcommand("init-matrix", "Write a transform matrix as CSV");
  init->add_option("kind", im.kind, "dct2, dct3-inverse (idct), dft, idft or rnd")->required();
  init->add_option("dims", im_dims, "ROWS COLS [ROWS2 COLS2]")->required()->expected(2, 4);
  init->add_option("-o,--out", im.out_dir, "Output directory");
  init->add_option("--seed", im.seed, "Seed for rnd");

  std::string params_file;
  auto *params = app.add_subcommand("params", "Audit parameter counts against the budget");
  params->add_option("experiment", params_file)->required();

  std::string gc_kind, gc_shape = "6x6";
  std::uint64_t gc_seed = 0;
  auto *grad = app.add_subcommand("gradcheck", "Finite-difference check of one layer kind");
  grad->add_option("kind", gc_kind)->required();
  grad->add_option("shape", gc_shape, "HxW, CxHxW or NxCxHxW (NxD for dense)");
  grad->add_option("seed", gc_seed);

  TrainArgs ta;
  auto *train = app.add_subcommand("train", "Run an experiment matrix");
  train->add_option("experiment", ta.experiment)->required();
  train->add_option("-o,--output-dir", ta.output_dir, "Override the file's output_dir");
  train->add_option("-j,--threads", ta.threads, "Override SPECTRAL_THREADS");

  ExportArgs ea;
  auto *exp = app.add_subcommand("export-weights", "Export a transform layer's W1");
  exp->add_option("checkpoint", ea.checkpoint)->required();
  exp->add_option("layer", ea.layer, "Layer index")->required();
  exp->add_option("out_dir", ea.out_dir);
  exp->add_option("--before", ea.before, "Checkpoint before training, for the normalized difference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*init) {
    if (im_dims.size() == 3) {
      std::cerr << "usage error: init-matrix takes 2 or 4 dimensions\n";
      return kExitUsage;
    }
    im.rows = im_dims[0];
    im.cols = im_dims[1];
    if (im_dims.size() == 4) {
      im.rows2 = im_dims[2];
      im.cols2 = im_dims[3];
    }
    return cmd_init_matrix(im, std::cout, std::cerr);
  }
  if (*params)
    return cmd_params(params_file, std::cout, std::cerr);
  if (*grad)
    return cmd_gradcheck(gc_kind, gc_shape, gc_seed, std::cout, std::cerr);
  if (*train)
    return cmd_train(ta, std::cout, std::cerr);
  return cmd_export_weights(ea, std::cout, std::cerr);
}
