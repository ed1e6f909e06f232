#include "mobonet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mobonet/dataset.hpp"
#include "mobonet/eval.hpp"
#include "mobonet/fusion_net.hpp"
#include "mobonet/gradcheck.hpp"
#include "mobonet/io_util.hpp"
#include "mobonet/pipeline.hpp"
#include "mobonet/synth.hpp"

namespace fs = std::filesystem;

namespace mobo {
namespace {

std::string sample_basename(std::size_t index) {
  std::string num = std::to_string(index);
  while (num.size() < 4) num.insert(num.begin(), '0');
  return "sample_" + num;
}

// Checkpoint config plumbing. Networks at load time are rebuilt from the
// stored configuration, so a checkpoint can never meet a mismatched net.

std::string meta_value(const CheckpointMeta& meta, const std::string& key) {
  auto it = meta.config.find(key);
  if (it == meta.config.end()) throw ConfigError("checkpoint config lacks key: " + key);
  return it->second;
}

std::map<std::string, std::string> encode_refine_cfg(const RefineNetConfig& cfg) {
  return {{"height", std::to_string(cfg.height)},
          {"width", std::to_string(cfg.width)},
          {"input_channels", std::to_string(cfg.input_channels)},
          {"width_multiplier", format_double(cfg.width_multiplier, 17)},
          {"dilation1", std::to_string(cfg.dilation1)},
          {"dilation2", std::to_string(cfg.dilation2)}};
}

RefineNetConfig decode_refine_cfg(const CheckpointMeta& meta) {
  if (meta.kind != "refinenet")
    throw ConfigError("expected a refinenet checkpoint, found kind '" + meta.kind + "'");
  RefineNetConfig cfg;
  cfg.height = std::stoi(meta_value(meta, "height"));
  cfg.width = std::stoi(meta_value(meta, "width"));
  cfg.input_channels = std::stoi(meta_value(meta, "input_channels"));
  cfg.width_multiplier = std::stod(meta_value(meta, "width_multiplier"));
  cfg.dilation1 = std::stoi(meta_value(meta, "dilation1"));
  cfg.dilation2 = std::stoi(meta_value(meta, "dilation2"));
  return cfg;
}

std::map<std::string, std::string> encode_fusion_cfg(const FusionNetConfig& cfg) {
  return {{"layer_count", std::to_string(cfg.layer_count)},
          {"kernel", std::to_string(cfg.kernel)},
          {"feature_maps", std::to_string(cfg.feature_maps)}};
}

FusionNetConfig decode_fusion_cfg(const CheckpointMeta& meta) {
  if (meta.kind != "fusion")
    throw ConfigError("expected a fusion checkpoint, found kind '" + meta.kind + "'");
  FusionNetConfig cfg;
  cfg.layer_count = std::stoi(meta_value(meta, "layer_count"));
  cfg.kernel = std::stoi(meta_value(meta, "kernel"));
  cfg.feature_maps = std::stoi(meta_value(meta, "feature_maps"));
  return cfg;
}

RefineNet<float> load_refinenet(const std::string& path) {
  const CheckpointMeta meta = read_checkpoint_meta(path);
  const RefineNetConfig cfg = decode_refine_cfg(meta);
  Rng rng(0);
  auto net = build_refinenet<float>(cfg, rng);
  load_checkpoint(path, net.params);
  return net;
}

FusionNet<float> load_fusion_net(const std::string& path) {
  const CheckpointMeta meta = read_checkpoint_meta(path);
  const FusionNetConfig cfg = decode_fusion_cfg(meta);
  Rng rng(0);
  auto net = build_fusion_net<float>(cfg, rng);
  load_checkpoint(path, net.params);
  return net;
}

void require_arg(const std::string& value, const char* flag) {
  if (value.empty()) throw ArgumentError(std::string("missing required ") + flag);
}

// Flat key=value defaults: keys are long option names without the dashes,
// values feed the same converters and validators as command-line input.
// Options already given on the command line keep their values.
void apply_config_file(CLI::App* sub, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + " line " + std::to_string(lineno) + ": empty key");
    CLI::Option* op = sub->get_option_no_throw("--" + key);
    if (op == nullptr)
      throw ConfigError(path + " line " + std::to_string(lineno) + ": unknown key '" + key +
                        "' for command " + sub->get_name());
    if (op->count() > 0) continue;
    try {
      op->add_result(value);
      op->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// Training logs go to the given file, or stdout when no path is set.
struct LogTarget {
  std::ofstream file;
  std::ostream* stream = &std::cout;

  explicit LogTarget(const std::string& path) {
    if (path.empty()) return;
    file.open(path);
    if (!file) throw IoError("cannot open log for write: " + path);
    stream = &file;
  }
};

struct SynthArgs {
  SynthConfig cfg;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  require_arg(a.out, "--out");
  fs::create_directories(a.out);
  const auto samples = synth_dataset(a.cfg);
  std::vector<ManifestEntry> entries;
  entries.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    entries.push_back(save_sample(a.out, sample_basename(i), samples[i]));
  write_manifest((fs::path(a.out) / "manifest.txt").string(), entries);
  return 0;
}

struct TrainBoundaryArgs {
  std::string manifest, checkpoint, log;
  TrainSettings ts;
  RefineNetConfig cfg;
};

int cmd_train_boundary(const TrainBoundaryArgs& a) {
  require_arg(a.manifest, "--manifest");
  require_arg(a.checkpoint, "--checkpoint");
  a.cfg.validate();
  const auto data = load_dataset(a.manifest);
  Rng rng(a.ts.seed);
  auto net = build_refinenet<float>(a.cfg, rng);
  LogTarget log(a.log);
  TrainSettings ts = a.ts;
  ts.seed = a.ts.seed + 1;  // distinct stream for the sample order
  train_boundary(net, data, ts, log.stream);
  save_checkpoint(a.checkpoint, "refinenet", encode_refine_cfg(a.cfg), net.params);
  return 0;
}

struct TrainFusionArgs {
  std::string manifest, checkpoint, boundary_checkpoint, log;
  TrainSettings ts;
  FusionNetConfig cfg;
};

int cmd_train_fusion(const TrainFusionArgs& a) {
  require_arg(a.manifest, "--manifest");
  require_arg(a.checkpoint, "--checkpoint");
  require_arg(a.boundary_checkpoint, "--boundary-checkpoint");
  a.cfg.validate();
  const auto data = load_dataset(a.manifest);
  auto boundary = load_refinenet(a.boundary_checkpoint);
  Rng rng(a.ts.seed);
  auto net = build_fusion_net<float>(a.cfg, rng);
  LogTarget log(a.log);
  TrainSettings ts = a.ts;
  ts.seed = a.ts.seed + 1;
  train_fusion(net, boundary, data, ts, log.stream);
  save_checkpoint(a.checkpoint, "fusion", encode_fusion_cfg(a.cfg), net.params);
  return 0;
}

struct InferArgs {
  std::string manifest, out, checkpoint, fusion_checkpoint;
};

int cmd_infer(const InferArgs& a) {
  require_arg(a.manifest, "--manifest");
  require_arg(a.out, "--out");
  require_arg(a.checkpoint, "--checkpoint");
  const auto data = load_dataset(a.manifest);
  auto boundary = load_refinenet(a.checkpoint);
  fs::create_directories(a.out);
  FusionNet<float> fusion;
  const bool refine_flows = !a.fusion_checkpoint.empty();
  if (refine_flows) fusion = load_fusion_net(a.fusion_checkpoint);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const GrayMap prob = infer_boundary(boundary, data[i]);
    const fs::path base = fs::path(a.out) / sample_basename(i);
    write_pgm16(base.string() + "_boundary.pgm", prob);
    if (refine_flows) {
      const FlowField refined = infer_refined_flow(fusion, prob, data[i].fwd_flow);
      write_flo(base.string() + "_refined.flo", refined);
    }
  }
  return 0;
}

struct EvalBoundaryArgs {
  std::string manifest, checkpoint, out, baseline_out;
  EvalConfig cfg;
};

int cmd_eval_boundary(const EvalBoundaryArgs& a) {
  require_arg(a.manifest, "--manifest");
  require_arg(a.checkpoint, "--checkpoint");
  require_arg(a.out, "--out");
  a.cfg.validate();
  const auto data = load_dataset(a.manifest);
  auto boundary = load_refinenet(a.checkpoint);
  std::vector<GrayMap> prob, base, gt;
  for (const auto& s : data) {
    prob.push_back(infer_boundary(boundary, s));
    if (!a.baseline_out.empty()) base.push_back(gradient_baseline_map(s.fwd_flow));
    gt.push_back(s.gt_boundary);
  }
  const auto curve = pr_curve(prob, gt, a.cfg);
  std::ofstream os(a.out);
  if (!os) throw IoError("cannot open for write: " + a.out);
  os << pr_table(curve);
  if (!os) throw IoError("write failed: " + a.out);
  if (!a.baseline_out.empty()) {
    std::ofstream bs(a.baseline_out);
    if (!bs) throw IoError("cannot open for write: " + a.baseline_out);
    bs << pr_table(pr_curve(base, gt, a.cfg));
  }
  std::cout << "mAP " << format_fixed(mean_average_precision(prob, gt, a.cfg), 6) << '\n';
  return 0;
}

struct EvalFlowArgs {
  std::string manifest, checkpoint, fusion_checkpoint, out;
};

int cmd_eval_flow(const EvalFlowArgs& a) {
  require_arg(a.manifest, "--manifest");
  require_arg(a.checkpoint, "--checkpoint");
  require_arg(a.fusion_checkpoint, "--fusion-checkpoint");
  require_arg(a.out, "--out");
  const auto data = load_dataset(a.manifest);
  auto boundary = load_refinenet(a.checkpoint);
  auto fusion = load_fusion_net(a.fusion_checkpoint);
  std::vector<FlowField> initial, refined, gt;
  for (const auto& s : data) {
    initial.push_back(s.fwd_flow);
    refined.push_back(infer_refined_flow(fusion, infer_boundary(boundary, s), s.fwd_flow));
    gt.push_back(s.gt_flow);
  }
  const double epe0 = epe_stats(initial, gt);
  const double epe1 = epe_stats(refined, gt);
  std::string table = "epe_initial " + format_fixed(epe0, 6) + "\n" +
                      "epe_refined " + format_fixed(epe1, 6) + "\n";
  std::ofstream os(a.out);
  if (!os) throw IoError("cannot open for write: " + a.out);
  os << table;
  if (!os) throw IoError("write failed: " + a.out);
  std::cout << table;
  return 0;
}

struct GradCheckArgs {
  std::uint64_t seed = 1;
  int instances = 20;
};

int cmd_grad_check(const GradCheckArgs& a) {
  const auto entries = run_gradcheck(a.seed, a.instances);
  bool ok = true;
  for (const auto& e : entries) {
    std::cout << e.name << ' ' << format_double(e.max_rel_err) << '\n';
    if (e.max_rel_err > 1e-4) ok = false;
  }
  std::cout << (ok ? "gradcheck pass\n" : "gradcheck FAIL\n");
  return ok ? 0 : 1;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Motion boundary detection and flow refinement at desk scale"};
  app.require_subcommand(1);

  std::string config_path;
  auto add_config = [&config_path](CLI::App* sub) {
    sub->add_option("--config", config_path, "Flat key=value defaults; flags take precedence")
        ->check(CLI::ExistingFile);
  };

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a manifest");
  add_config(synth);
  synth->add_option("--out", sy.out, "Output directory");
  synth->add_option("--count", sy.cfg.count, "Sample count");
  synth->add_option("--width", sy.cfg.width, "Frame width");
  synth->add_option("--height", sy.cfg.height, "Frame height");
  synth->add_option("--seed", sy.cfg.seed, "Generator seed");
  synth->add_option("--noise-sigma", sy.cfg.noise_sigma, "Initial-flow noise sigma in px");
  synth->add_option("--smooth-passes", sy.cfg.smooth_passes, "Box blurs on the initial flows");
  synth->add_flag("--rotations", sy.cfg.rotations, "Allow small shape rotations");

  TrainBoundaryArgs tb;
  tb.cfg.height = 64;
  tb.cfg.width = 64;
  tb.cfg.width_multiplier = 0.125;
  auto* trainb = app.add_subcommand("train-boundary", "Train the motion boundary net");
  add_config(trainb);
  trainb->add_option("--manifest", tb.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  trainb->add_option("--checkpoint", tb.checkpoint, "Checkpoint to write");
  trainb->add_option("--log", tb.log, "Loss log file (default stdout)");
  trainb->add_option("--iterations", tb.ts.iterations, "Training iterations");
  trainb->add_option("--batch", tb.ts.batch_size, "Samples per optimizer step");
  trainb->add_option("--seed", tb.ts.seed, "Seed for init and sample order");
  trainb->add_option("--divisor", tb.ts.divisor, "Schedule interval divisor");
  trainb->add_option("--lr", tb.ts.base_lr, "Base learning rate (0 = phase default)");
  trainb->add_option("--height", tb.cfg.height, "Input height");
  trainb->add_option("--width", tb.cfg.width, "Input width");
  trainb->add_option("--width-multiplier", tb.cfg.width_multiplier, "Channel scale in (0,1]");
  trainb->add_option("--dilation1", tb.cfg.dilation1, "Fusion-unit dilation (second conv)");
  trainb->add_option("--dilation2", tb.cfg.dilation2, "Fusion-unit dilation (fourth conv)");

  TrainFusionArgs tf;
  tf.ts.iterations = 1000;
  auto* trainf = app.add_subcommand("train-fusion", "Train the flow-boundary fusion net");
  add_config(trainf);
  trainf->add_option("--manifest", tf.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  trainf->add_option("--checkpoint", tf.checkpoint, "Checkpoint to write");
  trainf->add_option("--boundary-checkpoint", tf.boundary_checkpoint, "Frozen boundary net")
      ->check(CLI::ExistingFile);
  trainf->add_option("--log", tf.log, "Loss log file (default stdout)");
  trainf->add_option("--iterations", tf.ts.iterations, "Training iterations");
  trainf->add_option("--batch", tf.ts.batch_size, "Samples per optimizer step");
  trainf->add_option("--seed", tf.ts.seed, "Seed for init and sample order");
  trainf->add_option("--divisor", tf.ts.divisor, "Schedule interval divisor");
  trainf->add_option("--lr", tf.ts.base_lr, "Base learning rate (0 = phase default)");
  trainf->add_option("--layers", tf.cfg.layer_count, "Convolution layer count");
  trainf->add_option("--kernel", tf.cfg.kernel, "Convolution kernel extent (odd)");
  trainf->add_option("--features", tf.cfg.feature_maps, "Feature maps per layer");

  InferArgs in;
  auto* infer = app.add_subcommand("infer", "Write boundary maps and refined flows");
  add_config(infer);
  infer->add_option("--manifest", in.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  infer->add_option("--out", in.out, "Output directory");
  infer->add_option("--checkpoint", in.checkpoint, "Boundary checkpoint")
      ->check(CLI::ExistingFile);
  infer->add_option("--fusion-checkpoint", in.fusion_checkpoint, "Fusion checkpoint (optional)")
      ->check(CLI::ExistingFile);

  EvalBoundaryArgs eb;
  bool eb_no_nms = false;
  auto* evalb = app.add_subcommand("eval-boundary", "Precision-recall table and mAP");
  add_config(evalb);
  evalb->add_option("--manifest", eb.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  evalb->add_option("--checkpoint", eb.checkpoint, "Boundary checkpoint")
      ->check(CLI::ExistingFile);
  evalb->add_option("--out", eb.out, "PR table file");
  evalb->add_option("--baseline-out", eb.baseline_out,
                    "Also evaluate the flow-gradient baseline into this file");
  evalb->add_option("--tol-frac", eb.cfg.tol_frac, "Match tolerance as a diagonal fraction");
  evalb->add_flag("--no-nms", eb_no_nms, "Skip NMS thinning");
  evalb->add_flag("--per-image", eb.cfg.per_image, "Average per-image APs instead of pooling");

  EvalFlowArgs ef;
  auto* evalf = app.add_subcommand("eval-flow", "Mean EPE before and after refinement");
  add_config(evalf);
  evalf->add_option("--manifest", ef.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  evalf->add_option("--checkpoint", ef.checkpoint, "Boundary checkpoint")
      ->check(CLI::ExistingFile);
  evalf->add_option("--fusion-checkpoint", ef.fusion_checkpoint, "Fusion checkpoint")
      ->check(CLI::ExistingFile);
  evalf->add_option("--out", ef.out, "EPE table file");

  GradCheckArgs gc;
  auto* gradc = app.add_subcommand("grad-check", "Finite-difference sweep over the op set");
  add_config(gradc);
  gradc->add_option("--seed", gc.seed, "Sweep seed");
  gradc->add_option("--instances", gc.instances, "Random instances per op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (!config_path.empty())
    for (CLI::App* sub : {synth, trainb, trainf, infer, evalb, evalf, gradc})
      if (sub->parsed()) apply_config_file(sub, config_path);

  if (synth->parsed()) return cmd_synth(sy);
  if (trainb->parsed()) return cmd_train_boundary(tb);
  if (trainf->parsed()) return cmd_train_fusion(tf);
  if (infer->parsed()) return cmd_infer(in);
  if (evalb->parsed()) {
    eb.cfg.nms = !eb_no_nms;
    return cmd_eval_boundary(eb);
  }
  if (evalf->parsed()) return cmd_eval_flow(ef);
  if (gradc->parsed()) return cmd_grad_check(gc);
  return 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ArgumentError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const FormatError& e) {
    std::cerr << e.what() << '\n';
    return 4;
  } catch (const StateError& e) {
    std::cerr << e.what() << '\n';
    return 5;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 6;
  } catch (const IoError& e) {
    std::cerr << e.what() << '\n';
    return 7;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mobo
