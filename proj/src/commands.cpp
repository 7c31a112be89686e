#include "drawcycle/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "drawcycle/synth.hpp"

namespace drawcycle {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create directory " + dir.string() +
                             (ec ? ": " + ec.message() : std::string()));
  }
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_epoch%04zu.bin", epoch);
  return buf;
}

// Trainer built from a checkpoint, either with the config echoed in the
// file or with an explicit one that the file must match.
Trainer trainer_from_checkpoint(const fs::path& ckpt, const fs::path& config) {
  const TrainConfig cfg = config.empty() ? read_checkpoint_config(ckpt) : load_config_file(config);
  Trainer t(cfg);
  t.load_checkpoint(ckpt);
  return t;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void cmd_synth(const SynthOptions& opt, std::ostream& log) {
  if (opt.out.empty()) throw std::invalid_argument("synth: --out is required");
  SynthConfig cfg;
  cfg.image_size = opt.size;
  cfg.n_train = opt.train;
  cfg.n_test = opt.test;
  cfg.seed = opt.seed;
  if (opt.train == 0 || opt.test == 0) throw std::invalid_argument("synth: --train and --test must be >= 1");
  cfg.validate();
  const Dataset ds = synth_generate(cfg);
  const Splits splits = make_splits(ds, opt.train, opt.test, derive_seed(opt.seed, 5000000));
  const Corpus corpus = assemble_corpus(ds, splits);
  ensure_dir(opt.out);
  write_corpus(corpus, opt.out);
  log << "trainX " << corpus.train_x.size() << ", trainY " << corpus.train_y.size() << ", testX "
      << corpus.test_x.size() << ", testY " << corpus.test_y.size() << ", eval_pairs "
      << corpus.eval_pairs.size() << " (" << opt.size << "x" << opt.size << ") -> "
      << opt.out.string() << "\n";
}

std::string RunManifest::to_text() const {
  std::ostringstream o;
  o << "seed = " << seed << "\n";
  o << "started = " << started << "\n";
  o << "finished = " << finished << "\n";
  o << "epochs_completed = " << epochs_completed << "\n";
  o << "data = " << data_dir << "\n";
  for (const auto& c : checkpoints) o << "checkpoint = " << c << "\n";
  for (const auto& p : outputs) o << "output = " << p << "\n";
  o << "[config]\n" << config_text;
  return o.str();
}

void write_manifest(const RunManifest& manifest, const fs::path& path) {
  write_text_atomic(path, manifest.to_text());
}

RunManifest cmd_train(const TrainOptions& opt, std::ostream& log) {
  if (opt.data.empty() || opt.config.empty() || opt.out.empty()) {
    throw std::invalid_argument("train: --data, --config and --out are required");
  }
  const TrainConfig cfg = load_config_file(opt.config);
  const Corpus corpus = load_corpus(opt.data);
  TrainData data{corpus.train_x, corpus.train_y};
  if (data.x.empty() || data.y.empty()) throw std::invalid_argument("train: corpus has an empty domain");
  for (const auto* dom : {&data.x, &data.y}) {
    for (const auto& img : *dom) {
      if (img.width != cfg.image_size || img.height != cfg.image_size) {
        throw std::invalid_argument("train: corpus image " + std::to_string(img.width) + "x" +
                                    std::to_string(img.height) + " does not match image_size " +
                                    std::to_string(cfg.image_size));
      }
    }
  }
  ensure_dir(opt.out);

  RunManifest m;
  m.config_text = to_config_text(cfg);
  m.seed = cfg.seed;
  m.started = utc_now();
  m.data_dir = opt.data.string();

  Trainer trainer(cfg);
  std::vector<std::string> rows;
  const fs::path losses_path = opt.out / "losses.csv";
  if (!opt.resume.empty()) {
    trainer.load_checkpoint(opt.resume);
    // Keep the already-recorded rows of the resumed epochs.
    if (fs::exists(losses_path)) {
      std::istringstream in(read_text(losses_path));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line) && rows.size() < trainer.epochs_done()) rows.push_back(line);
    }
    log << "resumed from " << opt.resume.string() << " at epoch " << trainer.epochs_done() << "\n";
  }
  auto flush_losses = [&] {
    std::string text = losses_csv_header() + "\n";
    for (const auto& r : rows) text += r + "\n";
    write_text_atomic(losses_path, text);
  };

  trainer.run(data, [&](const EpochRecord& rec, Trainer& t) {
    rows.push_back(losses_csv_row(rec));
    flush_losses();
    log << "epoch " << rec.epoch << "/" << cfg.epochs_total << "  total_g " << fmt("%.4f", rec.losses.total_g)
        << "  cyc " << fmt("%.4f", rec.losses.cyc) << "  d_x " << fmt("%.4f", rec.losses.gan_d_x) << "  d_y "
        << fmt("%.4f", rec.losses.gan_d_y) << "  (" << fmt("%.1f", rec.seconds) << " s)\n";
    const bool scheduled = cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0;
    if (scheduled || rec.epoch == cfg.epochs_total) {
      const fs::path p = opt.out / checkpoint_name(rec.epoch);
      t.save_checkpoint(p);
      m.checkpoints.push_back(p.string());
    }
  });
  flush_losses();
  m.outputs.push_back(losses_path.string());
  m.epochs_completed = trainer.epochs_done();
  m.finished = utc_now();
  const fs::path manifest_path = opt.out / "manifest.txt";
  m.outputs.push_back(manifest_path.string());
  write_manifest(m, manifest_path);
  log << "wrote " << manifest_path.string() << "\n";
  return m;
}

Direction parse_direction(const std::string& text) {
  if (text == "x2y") return Direction::x2y;
  if (text == "y2x") return Direction::y2x;
  throw std::invalid_argument("direction must be x2y or y2x, got '" + text + "'");
}

std::size_t cmd_translate(const TranslateOptions& opt, std::ostream& log) {
  if (opt.ckpt.empty() || opt.in.empty() || opt.out.empty()) {
    throw std::invalid_argument("translate: --ckpt, --in and --out are required");
  }
  Trainer trainer = trainer_from_checkpoint(opt.ckpt, opt.config);
  GeneratorNet& g = opt.direction == Direction::x2y ? trainer.nets().g_xy : trainer.nets().g_yx;
  g.set_training(false);
  const auto files = list_pgm(opt.in);
  if (files.empty()) throw std::invalid_argument("translate: no .pgm files in " + opt.in.string());
  ensure_dir(opt.out);
  for (const auto& f : files) {
    Tape tape;
    const Tensor y = g.forward(tape, image_to_tensor(load_image(f)));
    save_image(tensor_to_image(y), opt.out / f.filename());
  }
  log << "translated " << files.size() << " images (" << (opt.direction == Direction::x2y ? "x2y" : "y2x")
      << ") -> " << opt.out.string() << "\n";
  return files.size();
}

MetricsReport cmd_evaluate(const EvaluateOptions& opt, std::ostream& log) {
  if (opt.translated.empty() || opt.reference.empty()) {
    throw std::invalid_argument("evaluate: --translated and --reference are required");
  }
  const auto tf = list_pgm(opt.translated);
  const auto rf = list_pgm(opt.reference);
  if (tf.size() != rf.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(tf.size()) + " translated vs " +
                                std::to_string(rf.size()) + " reference images");
  }
  std::vector<GrayImage> t, r;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < tf.size(); ++i) {
    if (tf[i].filename() != rf[i].filename()) {
      throw std::invalid_argument("evaluate: file names differ: " + tf[i].filename().string() + " vs " +
                                  rf[i].filename().string());
    }
    t.push_back(load_image(tf[i]));
    r.push_back(load_image(rf[i]));
    ids.push_back(tf[i].stem().string());
  }
  MetricsReport report = evaluate_dataset(t, r, ids);
  if (!opt.out.empty()) {
    std::ostringstream csv;
    write_report_csv(report, csv);
    write_text_atomic(opt.out, csv.str());
  }
  log << summary_line(report) << "\n";
  return report;
}

LossTable parse_losses_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw std::invalid_argument("curves: empty CSV");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "epoch") {
    throw std::invalid_argument("curves: header must start with 'epoch' and name at least one column");
  }
  LossTable t;
  t.columns.assign(header.begin() + 1, header.end());
  t.series.resize(t.columns.size());
  std::size_t lineno = 1;
  auto number = [&](const std::string& cell) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) {
      throw std::invalid_argument("curves: line " + std::to_string(lineno) + ": bad number '" + cell + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("curves: line " + std::to_string(lineno) + " has " +
                                  std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(header.size()));
    }
    const double epoch = number(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (!cells[c].empty()) t.series[c - 1].emplace_back(epoch, number(cells[c]));
    }
    ++t.rows;
  }
  if (t.rows == 0) throw std::invalid_argument("curves: CSV has no data rows");
  return t;
}

std::string render_curves_svg(const LossTable& table, const std::vector<std::string>& columns) {
  std::vector<std::size_t> picked;
  if (columns.empty()) {
    for (std::size_t i = 0; i < table.columns.size(); ++i) picked.push_back(i);
  } else {
    for (const auto& name : columns) {
      const auto it = std::find(table.columns.begin(), table.columns.end(), name);
      if (it == table.columns.end()) throw std::invalid_argument("curves: unknown column '" + name + "'");
      picked.push_back(static_cast<std::size_t>(it - table.columns.begin()));
    }
  }
  constexpr double kW = 480, kH = 200, kPad = 40, kGap = 30;
  const double total_h = static_cast<double>(picked.size()) * (kH + kGap) + kGap;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW + 2 * kPad << "\" height=\"" << total_h
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t k = 0; k < picked.size(); ++k) {
    const auto& pts = table.series[picked[k]];
    const double top = kGap + static_cast<double>(k) * (kH + kGap);
    o << "<g id=\"" << table.columns[picked[k]] << "\">\n";
    o << "<text x=\"" << kPad << "\" y=\"" << top - 8 << "\">" << table.columns[picked[k]] << "</text>\n";
    o << "<rect x=\"" << kPad << "\" y=\"" << top << "\" width=\"" << kW << "\" height=\"" << kH
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
    if (!pts.empty()) {
      double x0 = pts.front().first, x1 = x0, y0 = pts.front().second, y1 = y0;
      for (const auto& [x, y] : pts) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
      const double xs = x1 > x0 ? kW / (x1 - x0) : 0;
      const double ys = y1 > y0 ? kH / (y1 - y0) : 0;
      o << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double px = kPad + (x1 > x0 ? (pts[i].first - x0) * xs : kW / 2);
        const double py = top + kH - (y1 > y0 ? (pts[i].second - y0) * ys : kH / 2);
        o << (i ? " " : "") << fmt("%.2f", px) << "," << fmt("%.2f", py);
      }
      o << "\"/>\n";
      o << "<text x=\"" << kPad + kW + 4 << "\" y=\"" << top + 10 << "\">" << fmt("%.4g", y1) << "</text>\n";
      o << "<text x=\"" << kPad + kW + 4 << "\" y=\"" << top + kH << "\">" << fmt("%.4g", y0) << "</text>\n";
    }
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void cmd_curves(const CurvesOptions& opt, std::ostream& log) {
  if (opt.losses.empty() || opt.out.empty()) throw std::invalid_argument("curves: --losses and --out are required");
  const LossTable table = parse_losses_csv(read_text(opt.losses));
  write_text_atomic(opt.out, render_curves_svg(table, opt.columns));
  log << "wrote " << opt.out.string() << " (" << table.rows << " epochs)\n";
}

double noise_l1_deviation(GeneratorNet& g, const std::vector<GrayImage>& images, double sigma,
                          std::uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("robustness: no images");
  g.set_training(false);
  Rng rng(seed);
  double total = 0;
  std::size_t count = 0;
  for (const auto& img : images) {
    const Tensor clean = image_to_tensor(img);
    Tensor noisy = clean.clone();
    for (auto& v : noisy.data()) v += rng.normal(0.0, sigma);
    Tape tape;
    const Tensor a = g.forward(tape, clean);
    const Tensor b = g.forward(tape, noisy);
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) total += std::abs(da[i] - db[i]);
    count += da.size();
  }
  return total / static_cast<double>(count);
}

std::vector<RobustnessRow> cmd_robustness(const RobustnessOptions& opt, std::ostream& log) {
  if (opt.sparse_ckpt.empty() || opt.dense_ckpt.empty() || opt.images.empty()) {
    throw std::invalid_argument("robustness: --sparse, --dense and --images are required");
  }
  if (!(opt.sigma >= 0)) throw std::invalid_argument("robustness: sigma must be >= 0");
  std::vector<GrayImage> images;
  for (const auto& f : list_pgm(opt.images)) images.push_back(load_image(f));
  std::vector<RobustnessRow> rows;
  const std::pair<const char*, GeneratorVariant> expected[] = {{"sparse", GeneratorVariant::sparse_kwinners},
                                                                {"dense", GeneratorVariant::dense_relu}};
  for (const auto& [label, path] : {std::pair{"sparse", opt.sparse_ckpt}, std::pair{"dense", opt.dense_ckpt}}) {
    Trainer t = trainer_from_checkpoint(path, {});
    const GeneratorVariant want = rows.empty() ? expected[0].second : expected[1].second;
    if (t.config().variant != want) {
      throw std::invalid_argument("robustness: --" + std::string(label) + " checkpoint " + path.string() +
                                  " holds a " + to_string(t.config().variant) + " generator");
    }
    RobustnessRow r;
    r.model = path.string();
    r.variant = to_string(t.config().variant);
    r.mean_l1 = noise_l1_deviation(t.nets().g_xy, images, opt.sigma, opt.seed);
    r.n_images = images.size();
    log << label << " (" << r.variant << "): mean L1 deviation " << fmt("%.6f", r.mean_l1) << " over "
        << r.n_images << " images, sigma " << opt.sigma << "\n";
    rows.push_back(r);
  }
  if (!opt.out.empty()) {
    std::string csv = "model,variant,sigma,n_images,mean_l1\n";
    for (const auto& r : rows) {
      csv += r.model + "," + r.variant + "," + fmt("%.17g", opt.sigma) + "," + std::to_string(r.n_images) +
             "," + fmt("%.17g", r.mean_l1) + "\n";
    }
    write_text_atomic(opt.out, csv);
  }
  const double ratio = rows[0].mean_l1 / rows[1].mean_l1;
  log << "sparse/dense deviation ratio " << fmt("%.4f", ratio) << "\n";
  return rows;
}

}  // namespace drawcycle
