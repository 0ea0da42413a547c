// huvr: train, reconstruct, eval, ablation and teacher-file tooling.
// Exit codes: 0 ok, 1 config/format/usage error, 2 data error, 3 numeric failure,
// 4 anything else.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "huvr/autodiff/ops.hpp"
#include "huvr/config/run_config.hpp"
#include "huvr/error.hpp"
#include "huvr/eval/ablation.hpp"
#include "huvr/eval/metrics.hpp"
#include "huvr/eval/probe.hpp"
#include "huvr/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace huvr;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool config_flags = true) {
  if (config_flags) {
    cmd->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "override one key (key=value), repeatable");
    cmd->add_option("--seed", c.seed, "shorthand for --set seed=N");
  }
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--threads", c.threads, "worker threads (default: HUVR_THREADS or 1)");
}

std::size_t thread_count(const Common& c) {
  if (c.threads) return c.threads;
  if (const char* env = std::getenv("HUVR_THREADS")) {
    char* end = nullptr;
    const unsigned long n = std::strtoul(env, &end, 10);
    if (*env == '\0' || *end != '\0' || n == 0) throw ConfigError(std::string("HUVR_THREADS is not a positive integer: ") + env);
    return n;
  }
  return 1;
}

// defaults < base (checkpoint or nothing) < --config < --set < --seed
config::RunConfig resolve(const Common& c, const config::RunConfig& base = {}) {
  config::RunConfig rc = base;
  if (!c.config_path.empty()) rc.merge_file(c.config_path);
  for (const auto& s : c.sets) rc.set_assignment(s);
  if (c.seed) rc.set("seed", std::to_string(*c.seed));
  return rc;
}

fs::path prepare_out(const Common& c) {
  fs::path out(c.out);
  fs::create_directories(out);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Model restored from a checkpoint plus the run config it was trained with.
struct Loaded {
  config::RunConfig rc;
  trainer::Learner learner;
};

Loaded load_checkpoint(const fs::path& path) {
  auto ckpt = trainer::read_checkpoint(path);
  auto rc = config::RunConfig::parse(ckpt.config_text);
  auto learner = trainer::Learner::init(config::model_config(rc), rc.get_uint("seed"));
  trainer::restore_params(learner.params(), ckpt);
  return {rc, std::move(learner)};
}

int cmd_train(const Common& c, const std::string& resume_path) {
  auto rc = resolve(c);
  const auto model = config::model_config(rc);
  auto tcfg = config::train_config(rc);
  tcfg.threads = thread_count(c);
  const auto out = prepare_out(c);
  const std::string text = rc.canonical_text();
  write_text(out / "config.txt", text);
  std::cout << "config written to " << (out / "config.txt").string() << '\n';

  auto data = config::load_data(rc);
  std::unique_ptr<data::TeacherSource> teacher;
  if (tcfg.loss.distill) teacher = config::make_teacher(rc);
  auto learner = trainer::Learner::init(model, rc.get_uint("seed"));
  std::optional<trainer::Checkpoint> resume;
  if (!resume_path.empty()) {
    resume = trainer::read_checkpoint(resume_path);
    if (config::RunConfig::parse(resume->config_text) != rc)
      throw ConfigError("--resume: checkpoint was written with a different config");
  }
  trainer::TrainOutputs outputs{out, text, &std::cout};
  auto res = trainer::train(learner, data.train, data.val.size() ? &data.val : nullptr, teacher.get(), tcfg, outputs,
                            resume ? &*resume : nullptr);
  if (!res.val_psnr.empty()) std::cout << "final val psnr " << fmt("%.3f", res.val_psnr.back().second) << " dB\n";
  return 0;
}

int cmd_reconstruct(const Common& c, const std::string& ckpt_path, const std::vector<std::string>& inputs) {
  auto loaded = load_checkpoint(ckpt_path);
  const auto& model = loaded.learner.model;
  const std::size_t side = model.cfg.image_size;
  std::vector<data::Image> images;
  for (const auto& p : inputs) {
    images.push_back(data::load_image(p));
    const auto& im = images.back();
    if (im.height() != side || im.width() != side)
      throw ConfigError(p + " is " + std::to_string(im.height()) + "x" + std::to_string(im.width()) +
                        ", checkpoint expects " + std::to_string(side) + "x" + std::to_string(side));
  }
  const auto out = prepare_out(c);
  auto recon = eval::reconstruct(model, images);
  std::ofstream csv(out / "recon.csv");
  csv << "file,psnr,ssim\n";
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto r = ad::reshape(ad::slice(recon, 0, i, 1), {3, side, side});
    const std::string stem = fs::path(inputs[i]).stem().string();
    data::save_png(out / (stem + "_recon.png"), r);
    const double p = eval::psnr(images[i].pixels, r), s = eval::ssim_value(images[i].pixels, r);
    csv << fs::path(inputs[i]).filename().string() << ',' << fmt("%.6f", p) << ',' << fmt("%.6f", s) << '\n';
    std::cout << inputs[i] << ": psnr " << fmt("%.3f", p) << " dB, ssim " << fmt("%.4f", s) << '\n';
  }
  return 0;
}

void append_probe_row(const fs::path& path, const std::string& source, const std::string& pooling,
                      const eval::ProbeResult& r) {
  const bool fresh = !fs::exists(path);
  std::ofstream csv(path, std::ios::app);
  if (fresh) csv << "source,pooling,dim,classes,n_train,n_val,accuracy\n";
  csv << source << ',' << pooling << ',' << r.dim << ',' << r.classes << ',' << r.n_train << ',' << r.n_val << ','
      << fmt("%.6f", r.accuracy) << '\n';
}

int cmd_eval(const Common& c, const std::string& ckpt_path, const std::string& task, std::size_t pca_dim) {
  auto loaded = load_checkpoint(ckpt_path);
  // Data and probe keys may be overridden; the model keys must still match the checkpoint.
  auto rc = resolve(c, loaded.rc);
  for (const auto& k : config::schema())
    if (k.key.rfind("model.", 0) == 0 && rc.get(k.key) != loaded.rc.get(k.key))
      throw ConfigError("eval: " + k.key + " differs from the checkpoint");
  const auto& model = loaded.learner.model;
  const auto out = prepare_out(c);
  write_text(out / "config.txt", rc.canonical_text());
  auto data = config::load_data(rc);

  if (task == "recon") {
    const auto& ds = data.val.size() ? data.val : data.train;
    auto ev = eval::evaluate_reconstruction(model, ds);
    std::ofstream csv(out / "recon.csv");
    csv << "index,id,psnr,ssim\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      char id[24];
      std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(ds.images[i].id));
      csv << i << ',' << id << ',' << fmt("%.6f", ev.psnr_each[i]) << ',' << fmt("%.6f", ev.ssim_each[i]) << '\n';
    }
    std::cout << "recon on " << ds.size() << " images: psnr " << fmt("%.3f", ev.psnr) << " dB, ssim "
              << fmt("%.4f", ev.ssim) << '\n';
    return 0;
  }

  if (data.val.size() == 0) throw DataError("probe needs a held-out split (data.n_train or data.val_dir)");
  const auto pooling = eval::parse_pooling(rc.get("probe.pooling"));
  const auto pcfg = config::probe_config(rc);
  if (task == "probe") {
    const auto source = eval::parse_source(rc.get("probe.source"));
    auto tx = eval::extract_features(model, data.train, source, pooling);
    auto vx = eval::extract_features(model, data.val, source, pooling);
    auto r = eval::linear_probe(tx, data.train.labels, vx, data.val.labels, pcfg, eval::source_name(source));
    append_probe_row(out / "probe.csv", eval::source_name(source), eval::pooling_name(pooling), r);
    std::cout << "probe " << eval::source_name(source) << '/' << eval::pooling_name(pooling) << ": accuracy "
              << fmt("%.4f", r.accuracy) << " (dim " << r.dim << ")\n";
    return 0;
  }

  // pca-baseline: encoder features compressed to pca_dim (default d_t), one basis per token.
  const std::size_t k = pca_dim ? pca_dim : model.cfg.d_t;
  if (k > model.cfg.d_vit)
    throw ConfigError("pca baseline: d_t=" + std::to_string(k) + " exceeds encoder feature dim " +
                      std::to_string(model.cfg.d_vit));
  auto tx = eval::extract_features(model, data.train, eval::FeatureSource::encoder, pooling);
  auto vx = eval::extract_features(model, data.val, eval::FeatureSource::encoder, pooling);
  const std::size_t token_dim = pooling == eval::Pooling::tokens ? model.cfg.d_vit : 0;
  auto pf = eval::pca_features(tx, vx, k, token_dim);
  auto r = eval::linear_probe(pf.train, data.train.labels, pf.val, data.val.labels, pcfg, "pca_encoder");
  append_probe_row(out / "probe.csv", "pca_encoder", eval::pooling_name(pooling), r);
  std::cout << "probe pca_encoder/" << eval::pooling_name(pooling) << " k=" << k << ": accuracy "
            << fmt("%.4f", r.accuracy) << " (dim " << r.dim << ")\n";
  return 0;
}

std::vector<hypernet::Variant> parse_variant_list(const std::string& list) {
  std::vector<hypernet::Variant> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(hypernet::parse_variant(item));
  return out;
}

int cmd_ablation(const Common& c) {
  auto rc = resolve(c);
  const auto model = config::model_config(rc);
  auto tcfg = config::train_config(rc);
  tcfg.threads = thread_count(c);
  const auto out = prepare_out(c);
  write_text(out / "config.txt", rc.canonical_text());
  auto data = config::load_data(rc);
  const auto& eval_set = data.val.size() ? data.val : data.train;
  auto entries = eval::ladder_entries(model, tcfg, rc.get_uint("seed"), parse_variant_list(rc.get("ablation.variants")));
  const auto t0 = std::chrono::steady_clock::now();
  auto report = eval::run_ablation_ladder(entries, data.train, eval_set, rc.get_real("ablation.copy_margin_db"), &std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream csv(out / "ladder.csv");
  eval::write_ladder_csv(csv, report);
  std::cout << eval::ladder_summary(report);
  const double budget = rc.get_real("ablation.budget_seconds");
  std::cout << (secs <= budget ? "PASS" : "FAIL") << " runtime within budget (" << fmt("%.1f", secs) << " s vs "
            << fmt("%.1f", budget) << " s)\n";
  return 0;
}

int cmd_teacher_inspect(const std::string& path) {
  auto d = data::read_teacher_file(path);
  std::cout << "magic " << data::kTeacherMagic << " version " << data::kTeacherVersion << '\n'
            << "records " << d.records.size() << '\n'
            << "patch_count " << d.patch_count << '\n'
            << "dim " << d.dim << '\n';
  for (std::size_t i = 0; i < d.records.size() && i < 3; ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(d.records[i].id));
    const auto g = d.records[i].global.to_vector();
    double n2 = 0;
    for (double v : g) n2 += v * v;
    std::cout << "record " << i << " id " << id << " |global| " << fmt("%.6f", std::sqrt(n2)) << '\n';
  }
  return 0;
}

int cmd_teacher_synth(const Common& c) {
  auto rc = resolve(c);
  if (rc.get("teacher.source") == "file") throw ConfigError("teacher synth needs teacher.source=random");
  rc.set("teacher.source", "random");
  const auto out = prepare_out(c);
  write_text(out / "config.txt", rc.canonical_text());
  auto data = config::load_data(rc);
  auto teacher = config::make_teacher(rc);
  std::vector<data::Image> all = data.train.images;
  all.insert(all.end(), data.val.images.begin(), data.val.images.end());
  auto file = data::synthesize_teacher_file(*teacher, all);
  data::write_teacher_file(out / "teacher.bin", file);
  std::cout << "wrote " << (out / "teacher.bin").string() << ": " << file.records.size() << " records, P "
            << file.patch_count << ", dim " << file.dim << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale hyper-network INR trainer"};
  app.require_subcommand(1);

  Common c;
  std::string resume, ckpt, task, teacher_file;
  std::vector<std::string> images;
  std::size_t pca_dim = 0;

  auto* train = app.add_subcommand("train", "train a model; writes config.txt, metrics.csv, checkpoints");
  add_common(train, c);
  train->add_option("--resume", resume, "continue from a checkpoint of the same config")->check(CLI::ExistingFile);

  auto* recon = app.add_subcommand("reconstruct", "reconstruct images with a trained checkpoint");
  add_common(recon, c, false);
  recon->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  recon->add_option("images", images, "PNG or PPM inputs")->required();

  auto* ev = app.add_subcommand("eval", "probe / recon / pca-baseline evaluation of a checkpoint");
  add_common(ev, c);
  ev->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--task", task)->required()->check(CLI::IsMember({"probe", "recon", "pca-baseline"}));
  ev->add_option("--dim", pca_dim, "pca-baseline components (default model.d_t)");

  auto* abl = app.add_subcommand("ablation", "train every ladder variant under one budget");
  add_common(abl, c);

  auto* teach = app.add_subcommand("teacher", "teacher feature files");
  teach->require_subcommand(1);
  auto* inspect = teach->add_subcommand("inspect", "print header and dims");
  inspect->add_option("file", teacher_file)->required();
  auto* synth = teach->add_subcommand("synth", "write frozen-random-teacher features for the dataset");
  add_common(synth, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(c, resume);
    if (*recon) return cmd_reconstruct(c, ckpt, images);
    if (*ev) return cmd_eval(c, ckpt, task, pca_dim);
    if (*abl) return cmd_ablation(c);
    if (*inspect) return cmd_teacher_inspect(teacher_file);
    if (*synth) return cmd_teacher_synth(c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 1;
}
