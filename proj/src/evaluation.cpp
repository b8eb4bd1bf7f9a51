#include "fedhar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "fedhar/error.hpp"

namespace fedhar {

using nlohmann::json;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json class_names() {
  json names = json::array();
  for (auto n : kGestureNames) names.push_back(std::string(n));
  return names;
}

json confusion_json(const ConfusionMatrix& c) {
  json rows = json::array();
  for (const auto& row : c.counts) rows.push_back(row);
  return rows;
}

ConfusionMatrix confusion_from(const json& j) {
  ConfusionMatrix c;
  if (!j.is_array() || j.size() != kNumClasses) throw DataError("report: confusion must be 8x8");
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    if (j[r].size() != kNumClasses) throw DataError("report: confusion must be 8x8");
    for (std::size_t k = 0; k < kNumClasses; ++k) c.counts[r][k] = j[r][k].get<std::uint64_t>();
  }
  return c;
}

json trace_json(const TrainTrace& t) {
  json epochs = json::array();
  for (const auto& e : t.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", number(e.train_loss)},
                      {"val_loss", number(e.val_loss)},
                      {"val_acc", number(e.val_accuracy)}});
  }
  return {{"best_epoch", t.best_epoch}, {"stopped_early", t.stopped_early}, {"epochs", epochs}};
}

TrainTrace trace_from(const json& j) {
  TrainTrace t;
  t.best_epoch = j.at("best_epoch").get<std::size_t>();
  t.stopped_early = j.at("stopped_early").get<bool>();
  for (const auto& e : j.at("epochs")) {
    t.epochs.push_back({e.at("epoch").get<std::size_t>(), number_from(e.at("train_loss")),
                        number_from(e.at("val_loss")), number_from(e.at("val_acc"))});
  }
  return t;
}

json round_json(const RoundRecord& r) {
  json clients = json::array();
  for (const auto& c : r.clients) {
    clients.push_back({{"client", c.client_id},
                       {"train_loss", number(c.train_loss)},
                       {"samples", c.sample_count},
                       {"local_epochs", c.local_epochs}});
  }
  json out = {{"round", r.round}, {"clients", clients}};
  if (r.metrics) {
    out["metrics"] = {{"val_loss", number(r.metrics->val_loss)},
                      {"val_acc", number(r.metrics->val_accuracy)},
                      {"test_loss", number(r.metrics->test_loss)},
                      {"test_acc", number(r.metrics->test_accuracy)}};
  }
  return out;
}

RoundRecord round_from(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<std::size_t>();
  for (const auto& c : j.at("clients")) {
    r.clients.push_back({c.at("client").get<std::string>(), number_from(c.at("train_loss")),
                         c.at("samples").get<std::size_t>(),
                         c.at("local_epochs").get<std::size_t>()});
  }
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    r.metrics = RoundMetrics{number_from(m.at("val_loss")), number_from(m.at("val_acc")),
                             number_from(m.at("test_loss")), number_from(m.at("test_acc"))};
  }
  return r;
}

GestureLabel label_from(const json& j) {
  const auto name = j.get<std::string>();
  const auto label = parse_gesture(name);
  if (!label) throw DataError("report: unknown gesture '" + name + "'");
  return *label;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  return out;
}

}  // namespace

GlobalTestSet compile_global_test(std::span<const ClientDataset> clients) {
  GlobalTestSet out;
  for (const auto& c : clients) {
    if (c.test.empty()) {
      out.warnings.push_back("client " + c.client_id + " has an empty test split");
      continue;
    }
    out.windows.insert(out.windows.end(), c.test.begin(), c.test.end());
  }
  return out;
}

CrossClientMatrix cross_client_eval(std::span<const nn::ParameterSet> models,
                                    const ModelConfig& model,
                                    std::span<const ClientDataset> clients,
                                    std::span<const WindowSample> global_test) {
  if (models.size() != clients.size()) {
    throw EvaluationError("cross_client_eval: " + std::to_string(models.size()) + " models for " +
                          std::to_string(clients.size()) + " clients");
  }
  const auto k = static_cast<Eigen::Index>(clients.size());
  CrossClientMatrix out;
  out.accuracy.resize(k, k + 1);
  for (const auto& c : clients) out.clients.push_back(c.client_id);

  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& params = models[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j <= k; ++j) {
      const auto target =
          j < k ? std::span<const WindowSample>(clients[static_cast<std::size_t>(j)].test)
                : global_test;
      const std::string where = j < k ? out.clients[static_cast<std::size_t>(j)] : "global";
      try {
        out.accuracy(i, j) = evaluate(params, model, target).accuracy;
      } catch (const Error& e) {
        throw EvaluationError("model " + out.clients[static_cast<std::size_t>(i)] + " on " +
                              where + ": " + e.what());
      }
    }
  }
  return out;
}

void require_disjoint(std::span<const WindowSample> training,
                      std::span<const WindowSample> held_out, const std::string& context) {
  std::set<std::string> seen;
  for (const auto& w : training) seen.insert(w.id());
  for (const auto& w : held_out) {
    if (seen.contains(w.id())) {
      throw EvaluationError(context + ": window " + w.id() + " appears in training data");
    }
  }
}

ExternalEvaluation external_client_eval(const nn::ParameterSet& params, const ModelConfig& model,
                                        const ClientDataset& external,
                                        std::span<const std::string> training_clients) {
  const std::set<std::string> trained(training_clients.begin(), training_clients.end());
  if (trained.contains(external.client_id)) {
    throw EvaluationError("external client " + external.client_id + " took part in training");
  }
  std::vector<WindowSample> windows;
  for (const auto* split : {&external.train, &external.val, &external.test}) {
    for (const auto& w : *split) {
      if (w.client_id != external.client_id || trained.contains(w.client_id)) {
        throw EvaluationError("external client " + external.client_id + " holds window " +
                              w.id() + " from another subject");
      }
      windows.push_back(w);
    }
  }
  if (windows.empty()) throw EvaluationError("external client " + external.client_id + " has no windows");

  ExternalEvaluation out;
  out.client_id = external.client_id;
  const auto predictions = predict_all(params, model, windows);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.confusion.add(windows[i].label, predictions[i].label);
    out.predictions.push_back(
        {windows[i].id(), windows[i].label, predictions[i].label, predictions[i].confidence});
  }
  out.accuracy = out.confusion.accuracy();
  return out;
}

// --- reports ------------------------------------------------------------------

json to_json(const ExperimentReport& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["paradigm"] = r.paradigm;
  j["model"] = std::string(to_string(r.model));
  j["classes"] = class_names();
  j["global_test"] = {{"accuracy", number(r.global_test_accuracy)},
                      {"loss", number(r.global_test_loss)},
                      {"size", r.global_test_size}};
  json per_class = json::array();
  for (double v : r.per_class_accuracy) per_class.push_back(number(v));
  j["per_class_accuracy"] = per_class;
  j["confusion"] = confusion_json(r.confusion);

  if (r.cross_client) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < r.cross_client->accuracy.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < r.cross_client->accuracy.cols(); ++k) {
        row.push_back(number(r.cross_client->accuracy(i, k)));
      }
      rows.push_back(row);
    }
    j["cross_client"] = {{"clients", r.cross_client->clients}, {"accuracy", rows}};
  }
  if (r.external) {
    json preds = json::array();
    for (const auto& p : r.external->predictions) {
      preds.push_back({{"window", p.window_id},
                       {"label", std::string(to_string(p.label))},
                       {"predicted", std::string(to_string(p.predicted))},
                       {"confidence", number(p.confidence)}});
    }
    j["external"] = {{"client", r.external->client_id},
                     {"accuracy", number(r.external->accuracy)},
                     {"confusion", confusion_json(r.external->confusion)},
                     {"predictions", preds}};
  }

  json rounds = json::array();
  for (const auto& rec : r.rounds) rounds.push_back(round_json(rec));
  j["rounds"] = rounds;
  json traces = json::object();
  for (const auto& [name, t] : r.traces) traces[name] = trace_json(t);
  j["traces"] = traces;
  json dist = json::object();
  for (const auto& [name, h] : r.class_distribution) dist[name] = h;
  j["class_distribution"] = dist;
  j["local_epochs"] = r.local_epochs;
  j["config"] = r.config;
  j["seeds"] = r.seeds;
  j["warnings"] = r.warnings;
  j["notes"] = r.notes;
  j["wall_clock_seconds"] = number(r.wall_clock_seconds);
  return j;
}

ExperimentReport report_from_json(const json& j) {
  try {
    ExperimentReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw DataError("report: unsupported schema_version " + std::to_string(r.schema_version));
    }
    r.paradigm = j.at("paradigm").get<std::string>();
    const auto kind = parse_model_kind(j.at("model").get<std::string>());
    if (!kind) throw DataError("report: unknown model kind");
    r.model = *kind;
    const auto& g = j.at("global_test");
    r.global_test_accuracy = number_from(g.at("accuracy"));
    r.global_test_loss = number_from(g.at("loss"));
    r.global_test_size = g.at("size").get<std::size_t>();
    const auto& pc = j.at("per_class_accuracy");
    if (pc.size() != kNumClasses) throw DataError("report: per_class_accuracy needs 8 entries");
    for (std::size_t i = 0; i < kNumClasses; ++i) r.per_class_accuracy[i] = number_from(pc[i]);
    r.confusion = confusion_from(j.at("confusion"));

    if (j.contains("cross_client")) {
      CrossClientMatrix m;
      const auto& cc = j["cross_client"];
      m.clients = cc.at("clients").get<std::vector<std::string>>();
      const auto& rows = cc.at("accuracy");
      const auto k = static_cast<Eigen::Index>(m.clients.size());
      m.accuracy.resize(k, k + 1);
      if (rows.size() != m.clients.size()) throw DataError("report: cross_client rows mismatch");
      for (Eigen::Index i = 0; i < k; ++i) {
        if (rows[static_cast<std::size_t>(i)].size() != m.clients.size() + 1) {
          throw DataError("report: cross_client columns mismatch");
        }
        for (Eigen::Index c = 0; c <= k; ++c) {
          m.accuracy(i, c) =
              number_from(rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
        }
      }
      r.cross_client = std::move(m);
    }
    if (j.contains("external")) {
      const auto& e = j["external"];
      ExternalEvaluation ext;
      ext.client_id = e.at("client").get<std::string>();
      ext.accuracy = number_from(e.at("accuracy"));
      ext.confusion = confusion_from(e.at("confusion"));
      for (const auto& p : e.at("predictions")) {
        ext.predictions.push_back({p.at("window").get<std::string>(), label_from(p.at("label")),
                                   label_from(p.at("predicted")),
                                   number_from(p.at("confidence"))});
      }
      r.external = std::move(ext);
    }
    for (const auto& rec : j.at("rounds")) r.rounds.push_back(round_from(rec));
    for (const auto& [name, t] : j.at("traces").items()) r.traces[name] = trace_from(t);
    for (const auto& [name, h] : j.at("class_distribution").items()) {
      r.class_distribution[name] = h.get<std::array<std::size_t, kNumClasses>>();
    }
    r.local_epochs = j.at("local_epochs").get<std::map<std::string, std::size_t>>();
    r.config = j.at("config");
    r.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.notes = j.value("notes", json::object());
    r.wall_clock_seconds = number_from(j.at("wall_clock_seconds"));
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

void export_report(const ExperimentReport& report, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << to_json(report).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

ExperimentReport import_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& confusion) {
  out << "true\\predicted";
  for (auto n : kGestureNames) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    out << kGestureNames[r];
    for (auto c : confusion.counts[r]) out << ',' << c;
    out << '\n';
  }
}

void write_cross_client_csv(std::ostream& out, const CrossClientMatrix& matrix) {
  out << "model";
  for (const auto& c : matrix.clients) out << ',' << c;
  out << ",global\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < matrix.accuracy.rows(); ++i) {
    out << matrix.clients[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < matrix.accuracy.cols(); ++k) out << ',' << matrix.accuracy(i, k);
    out << '\n';
  }
}

void write_round_log(std::ostream& out, std::span<const RoundRecord> rounds) {
  for (const auto& r : rounds) out << round_json(r).dump() << '\n';
}

std::vector<std::filesystem::path> write_report_tables(const ExperimentReport& report,
                                                       const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, auto&& body) {
    const auto path = dir / name;
    auto out = open_output(path);
    body(out);
    if (!out) throw IoError("failed writing " + path.string());
    written.push_back(path);
  };

  emit("confusion.csv", [&](std::ostream& o) { write_confusion_csv(o, report.confusion); });
  if (report.cross_client) {
    emit("cross_client.csv", [&](std::ostream& o) { write_cross_client_csv(o, *report.cross_client); });
  }
  if (report.external) {
    emit("external_confusion.csv",
         [&](std::ostream& o) { write_confusion_csv(o, report.external->confusion); });
    emit("external_predictions.csv", [&](std::ostream& o) {
      o << "window,label,predicted,confidence\n";
      for (const auto& p : report.external->predictions) {
        o << p.window_id << ',' << to_string(p.label) << ',' << to_string(p.predicted) << ','
          << p.confidence << '\n';
      }
    });
  }
  if (!report.rounds.empty()) {
    emit("rounds.jsonl", [&](std::ostream& o) { write_round_log(o, report.rounds); });
    emit("rounds.csv", [&](std::ostream& o) {
      o << "round,val_loss,val_acc,test_loss,test_acc\n";
      for (const auto& r : report.rounds) {
        o << r.round;
        if (r.metrics) {
          o << ',' << r.metrics->val_loss << ',' << r.metrics->val_accuracy << ','
            << r.metrics->test_loss << ',' << r.metrics->test_accuracy;
        } else {
          o << ",,,,";
        }
        o << '\n';
      }
    });
  }
  for (const auto& [name, trace] : report.traces) {
    emit("trace_" + name + ".csv", [&](std::ostream& o) { write_trace_csv(o, trace); });
  }
  if (!report.class_distribution.empty()) {
    emit("class_distribution.csv", [&](std::ostream& o) {
      o << "client";
      for (auto n : kGestureNames) o << ',' << n;
      o << '\n';
      for (const auto& [client, h] : report.class_distribution) {
        o << client;
        for (auto c : h) o << ',' << c;
        o << '\n';
      }
    });
  }
  return written;
}

// --- plots --------------------------------------------------------------------

namespace {

std::string svg_header(int w, int h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

const char* kPalette[kNumClasses] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                                     "#59a14f", "#edc948", "#b07aa1", "#ff9da7"};

void class_distribution_svg(std::ostream& o, const ExperimentReport& r) {
  const int bar = 28, gap = 12, left = 70, top = 20, height = 240;
  const int n = static_cast<int>(r.class_distribution.size());
  const int width = left + n * (bar + gap) + 130;
  std::size_t peak = 1;
  for (const auto& [c, h] : r.class_distribution) {
    std::size_t sum = 0;
    for (auto v : h) sum += v;
    peak = std::max(peak, sum);
  }
  o << svg_header(width, height + 60);
  int x = left;
  for (const auto& [client, h] : r.class_distribution) {
    double y = top + height;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const double seg = static_cast<double>(h[k]) / static_cast<double>(peak) * height;
      y -= seg;
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar << "\" height=\"" << seg
        << "\" fill=\"" << kPalette[k] << "\"/>\n";
    }
    o << "<text x=\"" << x << "\" y=\"" << top + height + 15 << "\">" << client << "</text>\n";
    x += bar + gap;
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const int ly = top + static_cast<int>(k) * 16;
    o << "<rect x=\"" << x + 10 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[k] << "\"/><text x=\"" << x + 25 << "\" y=\"" << ly + 9 << "\">"
      << kGestureNames[k] << "</text>\n";
  }
  o << "<text x=\"5\" y=\"" << top + 10 << "\">windows</text>\n</svg>\n";
}

void cross_client_svg(std::ostream& o, const CrossClientMatrix& m) {
  const int cell = 44, left = 70, top = 30;
  const auto rows = static_cast<int>(m.accuracy.rows());
  const auto cols = static_cast<int>(m.accuracy.cols());
  o << svg_header(left + cols * cell + 20, top + rows * cell + 20);
  for (int c = 0; c < cols; ++c) {
    const std::string name = c < rows ? m.clients[static_cast<std::size_t>(c)] : "global";
    o << "<text x=\"" << left + c * cell + 4 << "\" y=\"" << top - 8 << "\">" << name << "</text>\n";
  }
  for (int i = 0; i < rows; ++i) {
    o << "<text x=\"5\" y=\"" << top + i * cell + cell / 2 + 4 << "\">"
      << m.clients[static_cast<std::size_t>(i)] << "</text>\n";
    for (int c = 0; c < cols; ++c) {
      const double a = std::clamp(m.accuracy(i, c), 0.0, 1.0);
      const int shade = static_cast<int>(255.0 * (1.0 - a));
      o << "<rect x=\"" << left + c * cell << "\" y=\"" << top + i * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\"/>\n"
        << "<text x=\"" << left + c * cell + 8 << "\" y=\"" << top + i * cell + cell / 2 + 4
        << "\" fill=\"" << (a > 0.5 ? "white" : "black") << "\">" << std::lround(a * 100)
        << "</text>\n";
    }
  }
  o << "</svg>\n";
}

void round_accuracy_svg(std::ostream& o, std::span<const RoundRecord> rounds) {
  const int w = 420, h = 240, left = 40, top = 15, plot_w = 360, plot_h = 190;
  o << svg_header(w, h);
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
    << plot_h << "\" fill=\"none\" stroke=\"#999\"/>\n";
  const double n = static_cast<double>(std::max<std::size_t>(rounds.size(), 2) - 1);
  auto line = [&](auto pick, const char* colour) {
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
    for (std::size_t i = 0; i < rounds.size(); ++i) {
      if (!rounds[i].metrics) continue;
      const double v = pick(*rounds[i].metrics);
      if (!std::isfinite(v)) continue;
      o << left + plot_w * static_cast<double>(i) / n << ',' << top + plot_h * (1.0 - v) << ' ';
    }
    o << "\"/>\n";
  };
  line([](const RoundMetrics& m) { return m.val_accuracy; }, "#f28e2b");
  line([](const RoundMetrics& m) { return m.test_accuracy; }, "#4e79a7");
  o << "<text x=\"" << left << "\" y=\"" << h - 10 << "\">round (orange: val, blue: test)</text>\n";
  o << "</svg>\n";
}

}  // namespace

bool render_plots(const ExperimentReport& report, const std::filesystem::path& dir) noexcept {
  try {
    std::filesystem::create_directories(dir);
    bool ok = true;
    auto emit = [&](const std::string& name, auto&& body) {
      std::ofstream out(dir / name);
      body(out);
      ok = ok && static_cast<bool>(out);
    };
    if (!report.class_distribution.empty()) {
      emit("class_distribution.svg", [&](std::ostream& o) { class_distribution_svg(o, report); });
    }
    if (report.cross_client) {
      emit("cross_client.svg", [&](std::ostream& o) { cross_client_svg(o, *report.cross_client); });
    }
    if (!report.rounds.empty()) {
      emit("round_accuracy.svg", [&](std::ostream& o) { round_accuracy_svg(o, report.rounds); });
    }
    return ok;
  } catch (...) {
    return false;
  }
}

}  // namespace fedhar
