#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ipc/compress.hpp"
#include "ipc/evaluation.hpp"
#include "ipc/gradcheck.hpp"
#include "ipc/manifest.hpp"
#include "ipc/runconfig.hpp"
#include "ipc/toyfaces.hpp"
#include "ipc/training.hpp"

namespace {

// distinct exit codes per error class
constexpr int kExitIo = 3;          // missing or unreadable files
constexpr int kExitConfig = 4;      // schema violations, bad flags
constexpr int kExitIncompat = 5;    // checkpoint/container hash mismatch
constexpr int kExitTrainAbort = 6;  // non-finite loss

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << text;
}

std::string hash_hex(uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

// reproducibility stanza written alongside every command's outputs
void write_repro(const std::string& out_path, const std::string& body) {
  write_text(out_path + ".repro.txt", body);
}

ipc::CodecModel<float> load_model(const std::string& path) {
  return ipc::load_checkpoint(path).model;
}

std::vector<ipc::LabeledImage> load_images(const std::string& manifest_path, ipc::Split split,
                                           std::map<std::string, int>& id_map) {
  auto entries = ipc::load_manifest(manifest_path);
  return ipc::load_split(entries, split, ipc::dir_of(manifest_path), id_map);
}

int cmd_train(const std::string& config_path) {
  auto cfg = ipc::load_runconfig(config_path);
  if (cfg.manifest.empty()) throw std::runtime_error("config: manifest path is required for train");
  std::map<std::string, int> id_map;
  auto train_set = load_images(cfg.manifest, ipc::Split::Train, id_map);
  if (train_set.empty()) throw std::runtime_error("train split is empty");
  std::vector<ipc::Tensor<float>> images;
  for (auto& li : train_set) images.push_back(std::move(li.image));

  ipc::EmbedderParams<float> embedder;
  ipc::AlignerConfig aligner = cfg.aligner;
  bool use_embedder = cfg.train.weights.lambda_id > 0;
  if (use_embedder) {
    if (cfg.embedder_path.empty())
      throw std::runtime_error("config: embedder path is required when lambda_id > 0");
    std::tie(embedder, aligner) = ipc::load_embedder<float>(cfg.embedder_path);
  }

  std::ofstream log(cfg.log_out);
  if (!log) throw std::runtime_error("cannot open for write: " + cfg.log_out);
  log << "step,rec,rate_bits,id,total\n";
  auto res = ipc::train(cfg.train, images, use_embedder ? &embedder : nullptr, aligner, &log);
  ipc::save_checkpoint(cfg.checkpoint_out, res.model, res.opt, res.step,
                       ipc::runconfig_echo(cfg));

  std::ostringstream repro;
  repro << ipc::runconfig_echo(cfg) << "checkpoint_hash=" << hash_hex(res.model.content_hash())
        << "\narch_hash=" << hash_hex(res.model.arch().hash()) << "\n";
  if (use_embedder) repro << "embedder_hash=" << hash_hex(embedder.content_hash()) << "\n";
  write_repro(cfg.checkpoint_out, repro.str());
  std::cout << "checkpoint " << cfg.checkpoint_out << " hash "
            << hash_hex(res.model.content_hash()) << ", " << res.step << " steps\n";
  return 0;
}

int cmd_compress(const std::string& ckpt, const std::string& in, const std::string& out) {
  auto model = load_model(ckpt);
  auto tables = ipc::build_pmf_tables(model.prior, model.arch().sigma_min);
  auto img = ipc::load_ppm(in);
  ipc::CompressStats st;
  auto bytes = ipc::compress_image(model, tables, img, &st);
  ipc::write_file_bytes(out, bytes);
  std::ostringstream repro;
  repro << "input=" << in << "\ncheckpoint=" << ckpt << "\ncheckpoint_hash="
        << hash_hex(model.content_hash()) << "\ncontainer_bytes=" << st.container_bytes
        << "\nbpp=" << ipc::bpp(st.container_bytes, img.shape[2], img.shape[1])
        << "\nclamped_symbols=" << st.clamped_symbols << "\n";
  write_repro(out, repro.str());
  std::cout << out << ": " << st.container_bytes << " bytes, bpp "
            << ipc::bpp(st.container_bytes, img.shape[2], img.shape[1]) << "\n";
  return 0;
}

int cmd_decompress(const std::string& ckpt, const std::string& in, const std::string& out) {
  auto model = load_model(ckpt);
  auto tables = ipc::build_pmf_tables(model.prior, model.arch().sigma_min);
  auto img = ipc::decompress_image(model, tables, ipc::read_file_bytes(in));
  ipc::save_ppm(out, img);
  std::ostringstream repro;
  repro << "input=" << in << "\ncheckpoint=" << ckpt << "\ncheckpoint_hash="
        << hash_hex(model.content_hash()) << "\nwidth=" << img.shape[2]
        << "\nheight=" << img.shape[1] << "\n";
  write_repro(out, repro.str());
  std::cout << out << ": " << img.shape[2] << "x" << img.shape[1] << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& embedder_path,
                 const std::string& manifest, int gallery_n, double far, uint64_t seed,
                 const std::string& out) {
  auto model = load_model(ckpt);
  auto [embedder, aligner] = ipc::load_embedder<float>(embedder_path);
  std::map<std::string, int> id_map;
  auto test_set = load_images(manifest, ipc::Split::Test, id_map);
  if (test_set.empty()) throw std::runtime_error("test split is empty");
  auto rep = ipc::evaluate_model(model, embedder, aligner, test_set, gallery_n, far, seed);
  std::ostringstream repro;
  repro << "checkpoint=" << ckpt << "\ncheckpoint_hash=" << hash_hex(model.content_hash())
        << "\nembedder=" << embedder_path << "\nembedder_hash="
        << hash_hex(embedder.content_hash()) << "\nmanifest=" << manifest
        << "\ngallery_n=" << gallery_n << "\nfar_target=" << far << "\nseed=" << seed << "\n";
  rep.config_echo = repro.str();
  write_text(out, rep.key_values());
  write_text(out + ".csv", ipc::EvalReport::csv_header() + "\n" + rep.csv_row() + "\n");
  write_repro(out, repro.str());
  std::cout << rep.key_values();
  return 0;
}

int cmd_embedder(const std::string& mode, uint64_t seed, const std::string& manifest,
                 const std::string& out, double crop_fraction, int align_size) {
  ipc::AlignerConfig aligner{crop_fraction, align_size};
  ipc::EmbedderArch arch;
  arch.in_side = align_size;
  ipc::EmbedderParams<float> emb;
  if (mode == "seeded") {
    emb = ipc::make_embedder<float>(ipc::EmbedderMode::SeededRandom, seed, aligner, arch);
  } else if (mode == "pretrained") {
    if (manifest.empty())
      throw std::runtime_error("pretrained mode needs --manifest with an embedder split");
    std::map<std::string, int> id_map;
    auto emb_set = load_images(manifest, ipc::Split::Embedder, id_map);
    auto codec_train = load_images(manifest, ipc::Split::Train, id_map);
    auto codec_test = load_images(manifest, ipc::Split::Test, id_map);
    std::set<int> codec_ids;
    for (const auto& li : codec_train) codec_ids.insert(li.identity);
    for (const auto& li : codec_test) codec_ids.insert(li.identity);
    emb = ipc::make_embedder<float>(ipc::EmbedderMode::Pretrained, seed, aligner, arch, emb_set,
                                    codec_ids);
  } else {
    throw std::runtime_error("embedder mode must be 'seeded' or 'pretrained'");
  }
  ipc::save_embedder(out, emb, aligner);
  std::ostringstream repro;
  repro << "mode=" << mode << "\nseed=" << seed << "\nembedder_hash="
        << hash_hex(emb.content_hash()) << "\n";
  write_repro(out, repro.str());
  std::cout << out << ": " << emb.provenance << ", hash " << hash_hex(emb.content_hash()) << "\n";
  return 0;
}

int cmd_datagen(uint64_t seed, int ids, int per_id, int side, int emb_ids, int emb_per_id,
                const std::string& out) {
  auto ds = ipc::generate_toyfaces(seed, ids, per_id, side, emb_ids, emb_per_id);
  ipc::emit_toyfaces(out, ds);
  std::ostringstream repro;
  repro << "seed=" << seed << "\nids=" << ids << "\nper_id=" << per_id << "\nside=" << side
        << "\nembedder_ids=" << emb_ids << "\nembedder_per_id=" << emb_per_id << "\n";
  write_repro(out + "/manifest.csv", repro.str());
  std::cout << out << ": " << ds.train.size() << " train, " << ds.test.size() << " test, "
            << ds.embedder_split.size() << " embedder images\n";
  return 0;
}

int cmd_gradcheck() {
  auto results = ipc::run_gradcheck();
  int fails = 0;
  std::printf("%-28s %-12s result\n", "check", "max_rel_err");
  for (const auto& r : results) {
    std::printf("%-28s %-12.3e %s\n", r.name.c_str(), r.max_rel_err, r.pass ? "pass" : "FAIL");
    fails += !r.pass;
  }
  std::printf("%zu checks, %d failures\n", results.size(), fails);
  return fails == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identity-preserving learned image codec"};
  app.require_subcommand(1);

  std::string config_path, ckpt, embedder_path, manifest, in, out;
  uint64_t seed = 1;
  int gallery_n = 1, ids = 8, per_id = 8, side = 64, emb_ids = 0, emb_per_id = 0;
  int align_size = 32;
  double far = 0.01, crop_fraction = 0.7;
  std::string emb_mode = "seeded";

  auto* train = app.add_subcommand("train", "optimize a codec from a config file");
  train->add_option("--config", config_path, "run configuration")->required();

  auto* compress = app.add_subcommand("compress", "image -> container bitstream");
  compress->add_option("--checkpoint", ckpt)->required();
  compress->add_option("--in", in, "P6 pixmap")->required();
  compress->add_option("--out", out, "container path")->required();

  auto* decompress = app.add_subcommand("decompress", "container bitstream -> image");
  decompress->add_option("--checkpoint", ckpt)->required();
  decompress->add_option("--in", in, "container path")->required();
  decompress->add_option("--out", out, "P6 pixmap")->required();

  auto* evaluate = app.add_subcommand("evaluate", "metric suite over a manifest's test split");
  evaluate->add_option("--checkpoint", ckpt)->required();
  evaluate->add_option("--embedder", embedder_path)->required();
  evaluate->add_option("--manifest", manifest)->required();
  evaluate->add_option("--gallery-n", gallery_n, "gallery images per identity");
  evaluate->add_option("--far", far, "false-acceptance-rate target");
  evaluate->add_option("--seed", seed, "gallery permutation seed (0 = sorted order)");
  evaluate->add_option("--out", out, "report path");

  auto* embedder = app.add_subcommand("embedder", "build a frozen recognition embedder file");
  embedder->add_option("--mode", emb_mode, "seeded | pretrained");
  embedder->add_option("--seed", seed)->required();
  embedder->add_option("--manifest", manifest, "needed for pretrained mode");
  embedder->add_option("--out", out)->required();
  embedder->add_option("--crop-fraction", crop_fraction);
  embedder->add_option("--align-size", align_size);

  auto* datagen = app.add_subcommand("datagen", "synthesize a toy-faces dataset + manifest");
  datagen->add_option("--seed", seed)->required();
  datagen->add_option("--ids", ids, "codec identities");
  datagen->add_option("--per-id", per_id, "images per identity");
  datagen->add_option("--side", side);
  datagen->add_option("--embedder-ids", emb_ids, "extra identities for the embedder split");
  datagen->add_option("--embedder-per-id", emb_per_id);
  datagen->add_option("--out", out, "output directory")->required();

  app.add_subcommand("gradcheck", "finite-difference check of every primitive and loss");

  CLI11_PARSE(app, argc, argv);
  std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "train") return cmd_train(config_path);
    if (cmd == "compress") return cmd_compress(ckpt, in, out);
    if (cmd == "decompress") return cmd_decompress(ckpt, in, out);
    if (cmd == "evaluate")
      return cmd_evaluate(ckpt, embedder_path, manifest, gallery_n, far, seed, out.empty() ? "eval_report.txt" : out);
    if (cmd == "embedder")
      return cmd_embedder(emb_mode, seed, manifest, out, crop_fraction, align_size);
    if (cmd == "datagen") return cmd_datagen(seed, ids, per_id, side, emb_ids, emb_per_id, out);
    if (cmd == "gradcheck") return cmd_gradcheck();
    return 1;
  } catch (const ipc::ContainerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind == ipc::ContainerError::HashMismatch ? kExitIncompat : kExitIo;
  } catch (const ipc::TrainAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    ipc::save_checkpoint("last_good.ipck", e.last_good.model, e.last_good.opt, e.last_good.step,
                         e.last_good.config_echo);
    std::cerr << "last finite state written to last_good.ipck (step " << e.last_good.step << ")\n";
    return kExitTrainAbort;
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    bool io = msg.find("cannot open") != std::string::npos ||
              msg.find("missing") != std::string::npos || msg.find("read failed") != std::string::npos;
    bool cfg = msg.find("config") != std::string::npos || msg.find("manifest") != std::string::npos ||
               msg.find("warm") != std::string::npos;
    bool incompat = msg.find("checkpoint:") != std::string::npos ||
                    msg.find("architecture") != std::string::npos;
    if (io) return kExitIo;
    if (cfg) return kExitConfig;
    if (incompat) return kExitIncompat;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
