/*
 * Copyright 2026 The ncadiff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ncadiff/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ncadiff/checkpoint.hpp"
#include "ncadiff/dataset.hpp"
#include "ncadiff/errors.hpp"
#include "ncadiff/gradcheck.hpp"
#include "ncadiff/image_io.hpp"
#include "ncadiff/metrics.hpp"
#include "ncadiff/parallel.hpp"

namespace fs = std::filesystem;

namespace ncadiff {
namespace {

std::string read_text(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

NoiseSchedule schedule_of(const RunConfig& c) { return make_schedule(c.timesteps, c.beta_start, c.beta_end); }

Dataset dataset_of(const RunConfig& c, const std::string& split_name) {
  if (c.data == "synthetic") return synth_dataset(c.synthetic_count, c.height, c.width, c.seed);
  std::optional<SplitSpec> split;
  if (!c.split_file.empty()) split = SplitSpec::read(c.split_file);
  auto data = load_dataset(c.image_dir, c.mask_dir, c.height, c.width, split);
  return select_split(data, split, split.has_value() ? split_name : "all");
}

PredictorFactory factory_of(const RunConfig& c, const ModelParams<float>& params, const NoiseSchedule& sched) {
  if (c.predictor == "oracle") {
    return [sched](const SegSample& s) { return oracle_predictor(s.mask, sched); };
  }
  return [&params, steps = c.timesteps](const SegSample&) { return model_predictor(params, steps); };
}

NoisePredictor<float> single_predictor(const RunConfig& c, const ModelParams<float>& params,
                                       const NoiseSchedule& sched, const std::string& mask_path) {
  if (c.predictor == "oracle") {
    if (mask_path.empty()) throw ArgumentError("the oracle predictor needs --mask");
    return oracle_predictor(load_mask(mask_path, c.height, c.width), sched);
  }
  return model_predictor(params, c.timesteps);
}

Tensor<float> clipped(const Tensor<float>& x) {
  Tensor<float> out = x.clone();
  for (auto& v : out.values()) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  if (c.predictor == "oracle" && c.total_steps > 0) {
    throw ConfigError("the oracle predictor has no trainable state; use total_steps = 0");
  }
  const std::size_t threads = resolve_thread_count(c.threads);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  const Dataset train_set = dataset_of(c, "train");
  const Dataset eval_set = c.eval_every > 0 ? (c.data == "dir" && !c.split_file.empty() ? dataset_of(c, "val") : train_set)
                                            : Dataset{};
  for (const auto& s : train_set) c.model.check_image_size(s.image.dim(1), s.image.dim(2));

  auto model = ModelParams<float>::create(c.model, c.seed);
  auto opt = OptimState<float>::create(model.named_parameters(), c.optim);
  const auto sched = schedule_of(c);

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + (dir / "metrics.csv").string());
  metrics << "step,loss_total,loss_n,loss_rgb,wall_ms\n";
  std::ofstream eval_log;
  if (c.eval_every > 0) {
    eval_log.open(dir / "eval_log.csv", std::ios::binary | std::ios::trunc);
    eval_log << "step,mean_dice,mean_iou\n";
  }

  out << "training " << variant_name(c.model.variant) << " (" << thousands(model.parameter_count())
      << " parameters) on " << train_set.size() << " samples for " << c.total_steps << " steps\n";
  const int report_every = std::max(1, c.total_steps / 10);
  auto last = std::chrono::steady_clock::now();
  TrainLoopOptions loop{c.batch_size, c.total_steps, c.seed, {c.rgb_loss, threads}};
  train(model, opt, train_set, sched, loop, [&](int step, const StepMetrics& m) {
    const auto now = std::chrono::steady_clock::now();
    const double wall = c.record_timing ? std::chrono::duration<double, std::milli>(now - last).count() : 0.0;
    last = now;
    metrics << step << ',' << fmt("%.9g", m.loss_total) << ',' << fmt("%.9g", m.loss_noise) << ','
            << fmt("%.9g", m.loss_rgb) << ',' << fmt("%.3f", wall) << '\n';
    if (step % report_every == 0 || step == c.total_steps) {
      out << "step " << step << " loss " << fmt("%.5f", m.loss_total) << " (noise " << fmt("%.5f", m.loss_noise)
          << ", rgb " << fmt("%.5f", m.loss_rgb) << ")\n";
    }
    if (c.eval_every > 0 && step % c.eval_every == 0) {
      const auto report = evaluate(factory_of(c, model, sched), eval_set, sched, c.seed, c.runs, threads);
      eval_log << step << ',' << fmt("%.6f", report.mean_dice) << ',' << fmt("%.6f", report.mean_iou) << '\n';
      out << "eval step " << step << " dice " << fmt("%.4f", report.mean_dice) << " iou "
          << fmt("%.4f", report.mean_iou) << '\n';
    }
    if (c.checkpoint_every > 0 && step % c.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.ckpt", step);
      save_checkpoint(dir / name, c, model, &opt);
    }
  });
  save_checkpoint(dir / "model.ckpt", c, model, &opt);
  out << "wrote " << (dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_infer(const std::string& checkpoint, const std::string& image_path, const std::string& mask_path,
              const std::string& out_dir, const ConfigOverrides& overrides, std::ostream& out) {
  const auto ck = load_checkpoint(checkpoint, overrides);
  const auto& c = ck.config;
  const auto sched = schedule_of(c);
  const auto image = load_image(image_path, c.height, c.width);
  const auto predictor = single_predictor(c, ck.params, sched, mask_path);
  const auto result =
      ensemble_infer(predictor, image, sched, RandomStream(c.seed), c.runs, resolve_thread_count(c.threads));
  fs::create_directories(out_dir);
  write_png(fs::path(out_dir) / "mask.png", to_gray_image(result.mask));
  write_png(fs::path(out_dir) / "mean.png", to_gray_image(result.mean_map));
  out << "foreground fraction " << fmt("%.4f", mask_fraction(result.mask)) << " over " << c.runs << " runs\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& split, const std::string& csv_path,
             const ConfigOverrides& overrides, std::ostream& out) {
  const auto ck = load_checkpoint(checkpoint, overrides);
  const auto& c = ck.config;
  const auto sched = schedule_of(c);
  const Dataset data = dataset_of(c, split);
  const auto report = evaluate(factory_of(c, ck.params, sched), data, sched, c.seed, c.runs,
                               resolve_thread_count(c.threads));
  const fs::path path = csv_path.empty() ? fs::path(c.output_dir) / "eval.csv" : fs::path(csv_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, eval_csv(report));
  out << "samples " << report.samples.size() << " mean dice " << fmt("%.6f", report.mean_dice) << " mean iou "
      << fmt("%.6f", report.mean_iou) << '\n';
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out) {
  const auto config = gradcheck_config(c.model.variant);
  const auto report = gradcheck_model(config, c.seed);
  for (const auto& t : report.tensors) {
    out << t.name << ": " << t.checked << " values, max rel error " << fmt("%.3e", t.max_rel_error) << '\n';
  }
  out << "gradcheck " << variant_name(config.variant) << " (c=" << config.channels << "): max rel error "
      << fmt("%.3e", report.max_rel_error) << " over " << report.checked << " values: "
      << (report.passed ? "PASS" : "FAIL") << '\n';
  return report.passed ? kExitOk : kExitVerification;
}

int cmd_frames(const std::string& checkpoint, const std::string& image_path, const std::string& mask_path,
               const std::string& out_dir, const ConfigOverrides& overrides, std::ostream& out) {
  const auto ck = load_checkpoint(checkpoint, overrides);
  const auto& c = ck.config;
  const auto sched = schedule_of(c);
  const auto image = load_image(image_path, c.height, c.width);
  const auto predictor = single_predictor(c, ck.params, sched, mask_path);
  fs::create_directories(out_dir);
  int written = 0;
  const ChainObserver<float> observer = [&](int t, const Tensor<float>& x_t, const Tensor<float>& eps_hat,
                                            const Tensor<float>& x_prev) {
    const auto estimate = t > 1 ? predict_x0(x_t, t, eps_hat, sched) : x_prev;
    char name[32];
    std::snprintf(name, sizeof name, "step_%04d.png", t);
    write_png(fs::path(out_dir) / name, to_gray_image(clipped(estimate)));
    ++written;
  };
  reverse_chain(predictor, image, sched, RandomStream(c.seed).split(0), observer);
  out << "wrote " << written << " frames to " << out_dir << '\n';
  return kExitOk;
}

}  // namespace

ConfigOverrides parse_overrides(const std::vector<std::string>& args) {
  ConfigOverrides out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.size() < 3 || a.compare(0, 2, "--") != 0) throw ConfigError("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= args.size()) throw ConfigError("missing value for " + a);
      out.emplace_back(a.substr(2), args[++i]);
    }
  }
  return out;
}

std::string params_report(const RunConfig& config) {
  const auto& m = config.model;
  m.validate();
  const std::size_t c = m.channels;
  const std::size_t h = m.hidden;
  const std::size_t k = m.perception_kernels;
  std::ostringstream os;
  os << "variant " << variant_name(m.variant) << " (channels " << c << ", hidden " << h << ", perception kernels "
     << k << ", levels " << m.levels;
  if (variant_uses_attention(m.variant)) os << ", cbam reduction " << m.cbam_reduction;
  os << ")\n";
  const std::size_t rule = NcaRule<float>::count_parameters(c, h, k);
  const std::size_t attention =
      variant_uses_attention(m.variant) ? CbamParams<float>::count_parameters(c, m.cbam_reduction) : 0;
  os << "per level:\n";
  os << "  perception kernels  k*c*9        " << thousands(k * c * 9) << '\n';
  os << "  fc1 weight          (k+1)*c*h    " << thousands((k + 1) * c * h) << '\n';
  os << "  fc1 bias            h            " << thousands(h) << '\n';
  os << "  fc2 weight          h*c          " << thousands(h * c) << '\n';
  if (attention > 0) {
    const std::size_t mid = c / m.cbam_reduction;
    os << "  cbam mlp            2*c*(c/r)    " << thousands(2 * c * mid) << '\n';
    os << "  cbam spatial conv   2*7*7+1      " << thousands(attention - 2 * c * mid) << '\n';
  }
  os << "  level total                      " << thousands(rule + attention) << '\n';
  for (std::size_t l = 0; l < m.levels; ++l) os << "level " << l << ": " << thousands(rule + attention) << '\n';
  os << "total: " << thousands(parameter_count(m)) << '\n';

  os << "all variants at these sizes:\n";
  for (auto v : {Variant::basic, Variant::cbam, Variant::multi, Variant::multi_cbam}) {
    ModelConfig other = m;
    other.variant = v;
    other.levels = variant_levels(v);
    os << "  " << variant_name(v) << ": " << thousands(parameter_count(other)) << '\n';
  }
  os << "note: the published reference counts are 139k (basic), 206k (cbam), 410k (multi) and 412k (multi_cbam)"
        " at channels 64, hidden 512. The published layer layout is not fully specified, so the closed-form"
        " counts above differ from those figures; the ordering basic < cbam < multi < multi_cbam agrees.\n";
  return os.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NCA-based diffusion segmentation: train, infer, eval, params, gradcheck, frames", "ncadiff"};
  app.require_subcommand(1);
  std::string config_path, checkpoint, image, mask, out_path, split;

  auto* train = app.add_subcommand("train", "train a model; writes metrics.csv and checkpoints to output_dir");
  auto* infer = app.add_subcommand("infer", "segment one image with an ensemble of reverse chains");
  auto* eval = app.add_subcommand("eval", "mean Dice/IoU over a dataset split; writes a per-sample CSV");
  auto* params = app.add_subcommand("params", "parameter counts with the closed-form breakdown");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient (64-bit, c=8)");
  auto* frames = app.add_subcommand("frames", "one PNG of the running x0 estimate per reverse step");

  for (auto* sub : {train, params, gradcheck}) {
    sub->add_option("--config", config_path, "key = value config file");
  }
  for (auto* sub : {infer, eval, frames}) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  }
  for (auto* sub : {infer, frames}) {
    sub->add_option("--image", image, "input PNG")->required();
    sub->add_option("--out", out_path, "output directory")->required();
    sub->add_option("--mask", mask, "ground-truth mask PNG (oracle predictor only)");
  }
  eval->add_option("--split", split, "split name when a split file is configured")->default_val("test");
  eval->add_option("--out", out_path, "per-sample CSV (default: output_dir/eval.csv)");
  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    sub->allow_extras();
    sub->footer("Any config key may be overridden with --KEY VALUE.");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const auto overrides = parse_overrides(sub->remaining());
    if (sub == train || sub == params || sub == gradcheck) {
      const auto config = parse_config(read_text(config_path), overrides);
      if (sub == train) return cmd_train(config, out);
      if (sub == gradcheck) return cmd_gradcheck(config, out);
      out << params_report(config);
      return kExitOk;
    }
    if (sub == infer) return cmd_infer(checkpoint, image, mask, out_path, overrides, out);
    if (sub == eval) return cmd_eval(checkpoint, split, out_path, overrides, out);
    return cmd_frames(checkpoint, image, mask, out_path, overrides, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace ncadiff
