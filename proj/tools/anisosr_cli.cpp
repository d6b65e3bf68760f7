// anisosr: batch command-line driver.
//
// Exit codes: 0 success, 2 validation error, 3 runtime failure.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "anisosr/evaluation.hpp"
#include "anisosr/inference.hpp"
#include "anisosr/nifti_io.hpp"
#include "anisosr/phantom.hpp"
#include "anisosr/training.hpp"
#include "config_file.hpp"

namespace fs = std::filesystem;
using namespace anisosr;
using anisosr::cli::CommandConfig;
using anisosr::cli::Provenance;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::optional<fs::path> cache_dir() {
  const char* env = std::getenv("ANISOSR_CACHE");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return fs::path(env);
}

// Inputs that do not exist as given are looked up in $ANISOSR_CACHE.
fs::path resolve_input(const fs::path& p) {
  if (fs::exists(p) || p.is_absolute()) return p;
  if (const auto cache = cache_dir(); cache && fs::exists(*cache / p)) return *cache / p;
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (text.empty() || text.back() != '\n') os << '\n';
}

std::string with_provenance(nlohmann::json j, const Provenance& prov) {
  j["provenance"] = nlohmann::json::parse(prov.to_json());
  return j.dump(2);
}

Mask mask_for(const Volume& ref, const std::string& mask_path) {
  if (!mask_path.empty()) return load_mask(resolve_input(mask_path));
  return foreground_mask(ref);
}

void append_table_row(const fs::path& table, const std::string& dataset, const MetricsReport& r) {
  const fs::path rows_path = fs::path(table.string() + ".rows.jsonl");
  {
    std::ofstream os(rows_path, std::ios::app);
    if (!os) throw IoError("cannot append to " + rows_path.string());
    nlohmann::json j{{"dataset", dataset}, {"method", r.method}, {"scale", r.scale}, {"psnr_db", r.psnr_db},
                     {"ssim", r.ssim}};
    os << j.dump() << '\n';
  }
  std::vector<TableRow> rows;
  std::ifstream is(rows_path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TableRow row;
    row.dataset = j.at("dataset").get<std::string>();
    row.report.method = j.at("method").get<std::string>();
    row.report.scale = j.at("scale").get<double>();
    row.report.psnr_db = j.at("psnr_db").is_number() ? j.at("psnr_db").get<double>()
                                                     : std::numeric_limits<double>::infinity();
    row.report.ssim = j.at("ssim").get<double>();
    rows.push_back(std::move(row));
  }
  write_text(table, metrics_table_csv(rows));
}

nlohmann::json report_json(const MetricsReport& r) { return nlohmann::json::parse(r.to_json()); }

void emit_report(const MetricsReport& r, const std::string& out, const Provenance& prov) {
  const std::string text = with_provenance(report_json(r), prov);
  std::cout << text << '\n';
  if (!out.empty()) write_text(out, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view anisotropic volume super-resolution with a self-supervised coordinate network"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ANISOSR_VERSION);

  CommandConfig cfg;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string log_level = "info";
  auto* seed_opt = app.add_option("--seed", seed, "Random seed")->expected(1);
  app.add_option("--config", config_path, "TOML-style config file; flags take precedence")->check(CLI::ExistingFile);
  auto* level_opt = app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");
  // Global options are accepted after the subcommand name too.
  app.fallthrough();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate an axial/coronal LR pair from an HR volume");
  std::string sim_input, sim_out;
  double sim_scale = 0.0;
  sim->add_option("--input", sim_input, "HR volume")->required();
  sim->add_option("--scale", sim_scale, "Through-plane scale factor (> 1)")->required();
  sim->add_option("--out-dir", sim_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Offline training on a manifest of volumes");
  std::string manifest, train_out;
  std::size_t epochs = 0, batch = 0, samples = 0, steps_per_image = 0;
  double lr = 0.0;
  std::vector<double> scale_range;
  train->add_option("--manifest", manifest, "JSON manifest")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  auto* epochs_opt = train->add_option("--epochs", epochs, "Offline epochs (default 35)");
  auto* batch_opt = train->add_option("--batch", batch, "Patches per step (default 10)");
  auto* lr_opt = train->add_option("--lr", lr, "Adam learning rate (default 1e-4)");
  auto* range_opt = train->add_option("--scale-range", scale_range, "Training scale range lo hi (default 2 4)")
                        ->expected(2);
  auto* samples_opt = train->add_option("--samples", samples, "Coordinate samples per patch per view (default 8000)");
  auto* spi_opt = train->add_option("--steps-per-image", steps_per_image, "Optimizer steps per image per epoch");

  // superres / finetune
  std::string model_path, axial_path, coronal_path, sr_out, timing_path;
  std::size_t ft_epochs = 0;
  std::vector<std::size_t> target_shape;
  std::size_t chunk_size = 0;
  bool no_clamp = false;
  auto* sr = app.add_subcommand("superres", "Super-resolve an LR pair, optionally after online fine-tuning");
  sr->add_option("--model", model_path, "Checkpoint")->required();
  sr->add_option("--axial", axial_path, "Axial LR volume")->required();
  sr->add_option("--coronal", coronal_path, "Coronal LR volume")->required();
  sr->add_option("--out", sr_out, "Output SR volume")->required();
  auto* ft_flag = sr->add_flag("--finetune,!--no-finetune", "Fine-tune on the pair before inference (default on)");
  auto* ft_epochs_opt = sr->add_option("--ft-epochs", ft_epochs, "Online epochs (default 10)");
  sr->add_option("--timing", timing_path, "Timing JSON (default <out>.timing.json)");
  sr->add_option("--target-shape", target_shape, "Output grid h w d")->expected(3);
  auto* chunk_opt = sr->add_option("--chunk-size", chunk_size, "Coordinates per decoder batch");
  sr->add_flag("--no-clamp", no_clamp, "Do not clamp the output to [0, 1]");

  auto* ft = app.add_subcommand("finetune", "Online fine-tuning only; writes a checkpoint");
  std::string ft_out;
  ft->add_option("--model", model_path, "Checkpoint")->required();
  ft->add_option("--axial", axial_path, "Axial LR volume")->required();
  ft->add_option("--coronal", coronal_path, "Coronal LR volume")->required();
  ft->add_option("--out", ft_out, "Fine-tuned checkpoint")->required();
  auto* ft_only_epochs_opt = ft->add_option("--ft-epochs", ft_epochs, "Online epochs (default 10)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Masked PSNR / SSIM of a prediction");
  std::string pred_path, ref_path, mask_path, method = "ours", report_out, table_path, dataset = "default";
  double report_scale = 0.0;
  ev->add_option("--pred", pred_path, "Predicted volume")->required();
  ev->add_option("--ref", ref_path, "Reference volume")->required();
  ev->add_option("--mask", mask_path, "Mask volume (default: foreground of the reference)");
  ev->add_option("--method", method, "Method name for the report");
  ev->add_option("--scale", report_scale, "Scale recorded in the report");
  ev->add_option("--out", report_out, "Report JSON path");
  ev->add_option("--table", table_path, "CSV table to update");
  ev->add_option("--dataset", dataset, "Dataset name for the table");

  // baseline
  auto* bl = app.add_subcommand("baseline", "Per-view interpolation baseline with averaged metrics");
  std::string baseline_kind;
  bl->add_option("kind", baseline_kind, "Baseline method")->required()->check(CLI::IsMember({"cubic"}));
  bl->add_option("--axial", axial_path, "Axial LR volume")->required();
  bl->add_option("--coronal", coronal_path, "Coronal LR volume")->required();
  bl->add_option("--ref", ref_path, "Reference volume")->required();
  bl->add_option("--mask", mask_path, "Mask volume (default: foreground of the reference)");
  bl->add_option("--out", report_out, "Report JSON path");
  bl->add_option("--table", table_path, "CSV table to update");
  bl->add_option("--dataset", dataset, "Dataset name for the table");

  // phantom
  auto* ph = app.add_subcommand("phantom", "Generate synthetic HR phantoms");
  std::size_t ph_n = 1, ph_size = 48;
  std::string ph_out;
  ph->add_option("--n", ph_n, "Number of phantoms");
  ph->add_option("--size", ph_size, "Cube side in voxels");
  ph->add_option("--out-dir", ph_out, "Output directory (default $ANISOSR_CACHE/phantoms)");

  // export-slices
  auto* ex = app.add_subcommand("export-slices", "Export one slice per volume plus a montage (PGM)");
  std::vector<std::string> ex_volumes;
  std::string ex_plane = "sagittal", ex_out;
  std::size_t ex_index = 0;
  ex->add_option("--volume", ex_volumes, "name=path, repeatable")->required();
  ex->add_option("--plane", ex_plane, "axial, coronal or sagittal");
  ex->add_option("--index", ex_index, "Slice index")->required();
  ex->add_option("--out-dir", ex_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (!config_path.empty()) cli::apply_key_values(read_key_values_file(config_path), cfg);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (level_opt->count() > 0) cfg.log_level = log_level;
    cfg.train.seed = cfg.seed;
    spdlog::set_level(spdlog::level::from_str(cfg.log_level));

    if (train->parsed()) {
      if (epochs_opt->count() > 0) cfg.train.epochs_offline = epochs;
      if (batch_opt->count() > 0) cfg.train.batch_patches = batch;
      if (lr_opt->count() > 0) cfg.train.lr = lr;
      if (range_opt->count() > 0) cfg.train.scale_range = {scale_range[0], scale_range[1]};
      if (samples_opt->count() > 0) cfg.train.samples_per_patch = samples;
      if (spi_opt->count() > 0) cfg.train.steps_per_image = steps_per_image;
    }
    if (sr->parsed() && ft_epochs_opt->count() > 0) cfg.train.epochs_online = ft_epochs;
    if (ft->parsed() && ft_only_epochs_opt->count() > 0) cfg.train.epochs_online = ft_epochs;
    if (sr->parsed()) {
      if (chunk_opt->count() > 0) cfg.inference.chunk_size = chunk_size;
      if (no_clamp) cfg.inference.clamp = false;
      if (!target_shape.empty()) cfg.inference.target_shape = Shape3{target_shape[0], target_shape[1], target_shape[2]};
    }
    cfg.train.validate();
    cfg.inference.validate();
    const Provenance prov = cli::make_provenance(args, cfg);

    if (sim->parsed()) {
      const Volume hr = load_volume(resolve_input(sim_input));
      const LRPair pair = simulate_lr_pair(hr, sim_scale);
      if (!fs::is_directory(sim_out)) fs::create_directories(sim_out);
      const fs::path dir(sim_out);
      save_volume(pair.axial, dir / "axial.nii.gz", prov.short_text());
      save_volume(pair.coronal, dir / "coronal.nii.gz", prov.short_text());
      nlohmann::json side{{"input", sim_input},
                          {"scale", sim_scale},
                          {"hr_shape", {pair.hr_shape.h, pair.hr_shape.w, pair.hr_shape.d}},
                          {"axial_shape", {pair.axial.shape().h, pair.axial.shape().w, pair.axial.shape().d}},
                          {"coronal_shape", {pair.coronal.shape().h, pair.coronal.shape().w, pair.coronal.shape().d}},
                          {"effective_scale_axial", pair.scale_ax.effective()},
                          {"effective_scale_coronal", pair.scale_cor.effective()}};
      write_text(dir / "pair.json", with_provenance(side, prov));
      spdlog::info("wrote {} and {}", (dir / "axial.nii.gz").string(), (dir / "coronal.nii.gz").string());
    } else if (train->parsed()) {
      const auto entries = read_manifest(manifest);
      NiftiReader reader;
      const auto pairs = load_training_pairs(entries, reader, cfg.train);
      const ModelParams init(cfg.encoder, cfg.decoder, cfg.seed, cfg.kaiming_a);
      std::ofstream log(train_out + ".log.jsonl");
      if (!log) throw IoError("cannot write training log next to " + train_out);
      TrainHooks hooks;
      hooks.on_step = [&](const LossReport& r, const ModelParams&) { log << to_json_line(r) << '\n' << std::flush; };
      hooks.on_checkpoint = [&](const ModelParams& m, std::size_t epoch) {
        save_checkpoint(m, train_out + ".epoch" + std::to_string(epoch));
      };
      const auto t0 = Clock::now();
      const TrainResult res = train_offline(init, pairs, cfg.train, hooks);
      const double offline_s = seconds_since(t0);
      save_checkpoint(res.model, train_out);
      nlohmann::json side{{"checkpoint", train_out},
                          {"images", pairs.size()},
                          {"skipped_images", res.skipped_images},
                          {"steps", res.log.size()},
                          {"final_loss", res.log.empty() ? 0.0 : res.log.back().loss_total},
                          {"offline_s", offline_s},
                          {"epochs", cfg.train.epochs_offline},
                          {"batch_patches", cfg.train.batch_patches},
                          {"lr", cfg.train.lr}};
      write_text(train_out + ".provenance.json", with_provenance(side, prov));
      spdlog::info("trained {} steps in {:.1f} s -> {}", res.log.size(), offline_s, train_out);
    } else if (sr->parsed() || ft->parsed()) {
      const ModelParams model = load_checkpoint(resolve_input(model_path));
      const LRPair pair =
          make_lr_pair(load_volume(resolve_input(axial_path)), load_volume(resolve_input(coronal_path)));
      const bool do_ft = ft->parsed() || ft_flag->count() == 0 || ft_flag->as<bool>();
      const auto t0 = Clock::now();
      ModelParams tuned = model;
      if (do_ft) tuned = finetune_online(model, pair, cfg.train).model;
      const double finetune_s = do_ft ? seconds_since(t0) : 0.0;
      if (ft->parsed()) {
        save_checkpoint(tuned, ft_out);
        write_text(ft_out + ".provenance.json",
                   with_provenance({{"finetune_s", finetune_s}, {"epochs_online", cfg.train.epochs_online}}, prov));
      } else {
        InferenceTiming timing;
        const Volume out = super_resolve(tuned, pair, cfg.inference, &timing);
        const double online_s = seconds_since(t0);
        save_volume(out, sr_out, prov.short_text());
        nlohmann::json tj{{"finetuned", do_ft},        {"finetune_s", finetune_s},
                          {"encode_s", timing.encode_s}, {"decode_s", timing.decode_s},
                          {"inference_s", timing.total_s}, {"online_s", online_s}};
        const fs::path tpath = timing_path.empty() ? fs::path(sr_out + ".timing.json") : fs::path(timing_path);
        write_text(tpath, with_provenance(tj, prov));
        spdlog::info("wrote {} (online {:.2f} s)", sr_out, online_s);
      }
    } else if (ev->parsed()) {
      const Volume pred = load_volume(resolve_input(pred_path));
      const Volume ref = load_volume(resolve_input(ref_path));
      if (!(pred.shape() == ref.shape())) throw ValidationError("prediction and reference shapes differ");
      const MetricsReport r = evaluate_method(pred, ref, mask_for(ref, mask_path), method, report_scale);
      emit_report(r, report_out, prov);
      if (!table_path.empty()) append_table_row(table_path, dataset, r);
    } else if (bl->parsed()) {
      const LRPair pair =
          make_lr_pair(load_volume(resolve_input(axial_path)), load_volume(resolve_input(coronal_path)));
      const Volume ref = load_volume(resolve_input(ref_path));
      if (!(ref.shape() == pair.hr_shape)) throw ValidationError("reference shape does not match the LR pair");
      const MetricsReport r = evaluate_cubic_baseline(pair, ref, mask_for(ref, mask_path));
      emit_report(r, report_out, prov);
      if (!table_path.empty()) append_table_row(table_path, dataset, r);
    } else if (ph->parsed()) {
      fs::path dir;
      if (!ph_out.empty()) {
        dir = ph_out;
      } else if (const auto cache = cache_dir()) {
        dir = *cache / "phantoms";
      } else {
        throw ValidationError("--out-dir is required when ANISOSR_CACHE is unset");
      }
      const auto volumes = make_phantoms(ph_n, ph_size, cfg.seed);
      fs::create_directories(dir);
      for (std::size_t n = 0; n < volumes.size(); ++n) {
        char name[32];
        std::snprintf(name, sizeof(name), "phantom_%03zu.nii.gz", n);
        save_volume(volumes[n], dir / name, prov.short_text());
      }
      write_text(dir / "phantoms.json", with_provenance({{"n", ph_n}, {"size", ph_size}}, prov));
      spdlog::info("wrote {} phantoms to {}", volumes.size(), dir.string());
    } else if (ex->parsed()) {
      std::vector<std::pair<std::string, Volume>> volumes;
      for (const std::string& spec : ex_volumes) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw ValidationError("--volume expects name=path, got " + spec);
        volumes.emplace_back(spec.substr(0, eq), load_volume(resolve_input(spec.substr(eq + 1))));
      }
      fs::create_directories(ex_out);
      const auto written =
          export_comparison_slices(volumes, parse_plane(ex_plane), ex_index, ex_out, prov.short_text());
      spdlog::info("wrote {} images to {}", written.size(), ex_out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FingerprintMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
