#include "mobonet/pipeline.hpp"

#include <cmath>

#include "mobonet/input_stack.hpp"
#include "mobonet/io_util.hpp"
#include "mobonet/losses.hpp"
#include "mobonet/optim.hpp"
#include "mobonet/rng.hpp"
#include "mobonet/warp.hpp"

namespace mobo {

std::vector<Sample> load_dataset(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);  // paths come back resolved
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_sample(e));
  return out;
}

namespace {

// Seeded epoch shuffler: hands out every index once per epoch, reshuffling
// with Fisher-Yates between epochs.
class SampleOrder {
 public:
  SampleOrder(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    pos_ = n;  // force a shuffle on first use
  }

  std::size_t next() {
    if (pos_ >= order_.size()) {
      for (std::size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[rng_.next_u64() % i]);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void log_step(std::ostream* log, long it, double lr, double loss) {
  if (!log) return;
  *log << it << ' ' << format_double(lr) << ' ' << format_double(loss) << '\n';
}

void check_finite(double loss, long it) {
  if (!std::isfinite(loss))
    throw StateError("training diverged at iteration " + std::to_string(it) + ": loss " +
                     format_double(loss));
}

}  // namespace

void train_boundary(RefineNet<float>& net, const std::vector<Sample>& data,
                    const TrainSettings& ts, std::ostream* log) {
  if (data.empty()) throw ArgumentError("train_boundary: empty dataset");
  if (ts.iterations < 0) throw ArgumentError("train_boundary: negative iteration count");
  if (ts.batch_size < 1) throw ArgumentError("train_boundary: batch size must be >= 1");

  std::vector<Tensor<float>> stacks, gts;
  stacks.reserve(data.size());
  for (const auto& s : data) {
    stacks.push_back(assemble_input_stack<float>(s));
    gts.push_back(graymap_to_tensor<float>(s.gt_boundary));
  }

  SampleOrder order(data.size(), ts.seed);
  AdaGrad<float> opt(1.0);
  for (long it = 0; it < ts.iterations; ++it) {
    const double lr = lr_schedule(TrainPhase::boundary, it, ts.divisor, ts.base_lr);
    double batch_loss = 0.0;
    for (int b = 0; b < ts.batch_size; ++b) {
      const std::size_t i = order.next();
      auto prob = forward_refinenet(net, stacks[i]);
      auto loss = class_balanced_bce(prob, gts[i]);
      batch_loss += loss.scalar();
      backward(loss);  // gradients accumulate across the batch
    }
    batch_loss /= ts.batch_size;
    check_finite(batch_loss, it);
    opt.set_lr(lr);
    opt.step(net.params);
    net.params.zero_grads();
    log_step(log, it, lr, batch_loss);
  }
}

void train_fusion(FusionNet<float>& fnet, RefineNet<float>& boundary_net,
                  const std::vector<Sample>& data, const TrainSettings& ts, std::ostream* log) {
  if (data.empty()) throw ArgumentError("train_fusion: empty dataset");
  if (ts.iterations < 0) throw ArgumentError("train_fusion: negative iteration count");
  if (ts.batch_size < 1) throw ArgumentError("train_fusion: batch size must be >= 1");

  std::vector<Tensor<float>> f0s, ms, gts;
  for (const auto& s : data) {
    f0s.push_back(flow_to_tensor<float>(s.fwd_flow));
    ms.push_back(graymap_to_tensor<float>(infer_boundary(boundary_net, s)));
    gts.push_back(flow_to_tensor<float>(s.gt_flow));
  }

  SampleOrder order(data.size(), ts.seed);
  AdaGrad<float> opt(1.0);
  for (long it = 0; it < ts.iterations; ++it) {
    const double lr = lr_schedule(TrainPhase::fusion, it, ts.divisor, ts.base_lr);
    double batch_loss = 0.0;
    for (int b = 0; b < ts.batch_size; ++b) {
      const std::size_t i = order.next();
      auto out = forward_fusion(fnet, f0s[i], ms[i]);
      auto loss = combined_flow_loss(out.residues, f0s[i], gts[i]);
      batch_loss += loss.scalar();
      backward(loss);  // gradients accumulate across the batch
    }
    batch_loss /= ts.batch_size;
    check_finite(batch_loss, it);
    opt.set_lr(lr);
    opt.step(fnet.params);
    fnet.params.zero_grads();
    log_step(log, it, lr, batch_loss);
  }
}

GrayMap infer_boundary(RefineNet<float>& net, const Sample& s) {
  auto prob = forward_refinenet(net, assemble_input_stack<float>(s));
  return tensor_to_graymap(prob);
}

FlowField infer_refined_flow(FusionNet<float>& fnet, const GrayMap& m, const FlowField& f0) {
  return run_fusion(fnet, f0, m).f1;
}

GrayMap gradient_baseline_map(const FlowField& flow) {
  GrayMap mag = flow_gradient_magnitude(flow);
  float peak = 0.0f;
  for (float v : mag.data) peak = std::max(peak, v);
  if (peak > 0.0f)
    for (float& v : mag.data) v /= peak;
  return mag;
}

}  // namespace mobo
