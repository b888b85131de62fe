#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "xfer/array_io.hpp"
#include "xfer/cli.hpp"
#include "xfer/error.hpp"
#include "xfer/evaluation.hpp"
#include "xfer/hpo_plan.hpp"
#include "xfer/probe_set.hpp"
#include "xfer/scorers.hpp"
#include "xfer/synthetic.hpp"

namespace py = pybind11;
using namespace xfer;

namespace {

template <class T>
using CArray = py::array_t<T, py::array::c_style | py::array::forcecast>;

py::array to_numpy(const Array& a) {
  std::vector<py::ssize_t> shape(a.shape().begin(), a.shape().end());
  return std::visit(
      [&](const auto& values) -> py::array {
        using T = typename std::decay_t<decltype(values)>::value_type;
        py::array_t<T> out(shape);
        std::copy(values.begin(), values.end(), out.mutable_data());
        return out;
      },
      a.data());
}

template <class T>
std::vector<T> flat_copy(const py::array& arr) {
  const auto c = CArray<T>::ensure(arr);
  if (!c) throw py::type_error("array is not convertible to the requested dtype");
  return std::vector<T>(c.data(), c.data() + c.size());
}

Array from_numpy(const py::array& arr) {
  if (arr.ndim() < 1 || arr.ndim() > 2) throw py::value_error("expected a 1-D or 2-D array");
  std::vector<std::size_t> shape(arr.shape(), arr.shape() + arr.ndim());
  const char kind = arr.dtype().kind();
  if (kind == 'f' && arr.itemsize() == 4) return Array(std::move(shape), flat_copy<float>(arr));
  if (kind == 'f') return Array(std::move(shape), flat_copy<double>(arr));
  if (kind == 'i' || kind == 'u' || kind == 'b') return Array(std::move(shape), flat_copy<std::int64_t>(arr));
  throw py::type_error("unsupported dtype; expected float or integer data");
}

std::vector<int> labels_from(const py::array& arr) {
  if (arr.ndim() == 2 && arr.shape(1) != 1) throw py::value_error("labels must be 1-D or a single column");
  if (arr.ndim() > 2) throw py::value_error("labels must be 1-D or a single column");
  std::vector<int> out;
  for (auto v : flat_copy<std::int64_t>(arr)) out.push_back(static_cast<int>(v));
  return out;
}

ScorerId scorer_from(const std::string& name) {
  const auto id = parse_scorer_id(name);
  if (!id) throw py::value_error("unknown scorer: " + name);
  return *id;
}

std::vector<ScorerId> scorers_from(const py::object& spec) {
  if (py::isinstance<py::str>(spec)) return parse_scorer_list(spec.cast<std::string>());
  std::vector<ScorerId> ids;
  for (const auto& item : spec) ids.push_back(scorer_from(item.cast<std::string>()));
  return ids;
}

py::dict config_dict(const HpoConfig& c) {
  py::dict d;
  d["index"] = c.index;
  d["learning_rate"] = c.learning_rate;
  d["weight_decay"] = c.weight_decay;
  d["optimizer"] = c.optimizer;
  d["scheduler"] = c.scheduler;
  d["epochs"] = c.epochs;
  d["batch_size"] = c.batch_size;
  return d;
}

PlanOptions plan_options(int count, std::pair<double, double> lr, std::pair<double, double> wd, int skip) {
  PlanOptions o;
  o.count = count;
  o.learning_rate = {lr.first, lr.second};
  o.weight_decay = {wd.first, wd.second};
  o.skip = skip;
  return o;
}

py::dict report_dict(const CorrelationReport& r) {
  py::list rows;
  for (const auto& row : r.rows) {
    py::dict d;
    d["split"] = row.split;
    d["split_kind"] = std::string(to_string(split_kind_of(row.split)));
    d["scorer"] = std::string(to_string(row.scorer));
    d["tau"] = row.tau ? py::cast(*row.tau) : py::none();
    d["pairs"] = row.pairs;
    rows.append(d);
  }
  py::dict out;
  out["task"] = r.task;
  out["method"] = std::string(to_string(r.method));
  out["rows"] = rows;
  return out;
}

py::dict table_dict(const ScoreTable& t) {
  py::dict scores;
  for (const auto& id : t.checkpoints()) {
    py::dict row;
    for (auto s : t.scorers()) {
      if (auto v = t.get(id, s)) row[py::str(std::string(to_string(s)))] = *v;
    }
    scores[py::str(id)] = row;
  }
  py::dict out;
  out["task"] = t.task();
  out["split"] = t.split();
  out["scores"] = scores;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transferability scorers, rank correlation and HPO planning.";
  m.attr("__version__") = kToolVersion;

  auto& data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ArrayFormatError>(m, "ArrayFormatError", data_error.ptr());

  // arrays

  m.def("read_array", [](const std::filesystem::path& path) { return to_numpy(read_array(path)); }, py::arg("path"),
        "Read an array file as float64, float32 or int64 numpy data.");
  m.def(
      "write_array",
      [](const py::array& array, const std::filesystem::path& path) { write_array(from_numpy(array), path); },
      py::arg("array"), py::arg("path"));
  m.def(
      "encode_array",
      [](const py::array& array) {
        const auto bytes = encode_array(from_numpy(array));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("array"));
  m.def(
      "decode_array",
      [](const py::bytes& data) {
        const std::string_view view = data;
        return to_numpy(decode_array(
            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(view.data()), view.size())));
      },
      py::arg("data"));

  // probe sets

  py::class_<ProbeSet>(m, "ProbeSet")
      .def(py::init([](Eigen::MatrixXd features, const py::array& labels, std::optional<int> class_count,
                       std::optional<Eigen::MatrixXd> outputs, const std::string& outputs_kind) {
             std::optional<SourceOutputs> src;
             if (outputs) src = SourceOutputs{std::move(*outputs), parse_outputs_kind(outputs_kind)};
             auto l = labels_from(labels);
             if (class_count) return ProbeSet::make(std::move(features), std::move(l), *class_count, std::move(src));
             return ProbeSet::make(std::move(features), std::move(l), std::move(src));
           }),
           py::arg("features"), py::arg("labels"), py::arg("class_count") = py::none(),
           py::arg("outputs") = py::none(), py::arg("outputs_kind") = "logits")
      .def_property_readonly("features", &ProbeSet::features)
      .def_property_readonly("labels",
                             [](const ProbeSet& p) {
                               py::array_t<std::int64_t> out(static_cast<py::ssize_t>(p.labels().size()));
                               std::copy(p.labels().begin(), p.labels().end(), out.mutable_data());
                               return out;
                             })
      .def_property_readonly("class_count", &ProbeSet::class_count)
      .def_property_readonly("sample_count", &ProbeSet::sample_count)
      .def_property_readonly("feature_dim", &ProbeSet::feature_dim)
      .def_property_readonly("outputs",
                             [](const ProbeSet& p) -> std::optional<Eigen::MatrixXd> {
                               if (!p.source_outputs()) return std::nullopt;
                               return p.source_outputs()->values;
                             })
      .def_property_readonly("outputs_kind",
                             [](const ProbeSet& p) -> std::optional<std::string> {
                               if (!p.source_outputs()) return std::nullopt;
                               return std::string(to_string(p.source_outputs()->kind));
                             })
      .def("source_probabilities", &ProbeSet::source_probabilities)
      .def("remap_labels", [](const ProbeSet& p, const std::vector<int>& mapping) { return remap_labels(p, mapping); },
           py::arg("mapping"))
      .def("save", [](const ProbeSet& p, const std::filesystem::path& dir) { save_probe_set(p, dir); },
           py::arg("directory"))
      .def("__repr__", [](const ProbeSet& p) {
        std::ostringstream s;
        s << "ProbeSet(n=" << p.sample_count() << ", d=" << p.feature_dim() << ", classes=" << p.class_count()
          << ", outputs=" << (p.source_outputs() ? to_string(p.source_outputs()->kind) : "none") << ")";
        return s.str();
      });

  py::class_<TaskManifest>(m, "TaskManifest")
      .def_readonly("task", &TaskManifest::task)
      .def_property_readonly("outputs_kind", [](const TaskManifest& t) { return std::string(to_string(t.outputs_kind)); })
      .def_readonly("base_dir", &TaskManifest::base_dir)
      .def_property_readonly("checkpoint_ids",
                             [](const TaskManifest& t) {
                               std::vector<std::string> ids;
                               for (const auto& c : t.checkpoints) ids.push_back(c.id);
                               return ids;
                             })
      .def(
          "architecture", [](const TaskManifest& t, const std::string& id) { return t.checkpoint(id).architecture; },
          py::arg("checkpoint"))
      .def(
          "performance", [](const TaskManifest& t, const std::string& id) { return t.checkpoint(id).performance; },
          py::arg("checkpoint"))
      .def(
          "probe_set",
          [](const TaskManifest& t, const std::string& id, const std::string& split) {
            return load_probe_set(t, t.checkpoint(id), split);
          },
          py::arg("checkpoint"), py::arg("split"))
      .def("to_json", [](const TaskManifest& t) { return manifest_to_json(t); });

  m.def("load_manifest", [](const std::filesystem::path& p) { return load_manifest(p); }, py::arg("path"));
  m.def(
      "parse_manifest",
      [](const std::string& text, const std::filesystem::path& base) { return parse_manifest(text, base); },
      py::arg("text"), py::arg("base_dir") = std::filesystem::path{});

  // scorers

  m.def("scorer_names", [] {
    std::vector<std::string> names;
    for (auto s : kAllScorers) names.emplace_back(to_string(s));
    return names;
  });
  m.def("h_score", &h_score, py::arg("probe"));
  m.def("reg_h_score", &reg_h_score, py::arg("probe"), py::arg("shrinkage") = py::none());
  m.def("nce", &nce, py::arg("probe"));
  m.def("leep", &leep, py::arg("probe"));
  m.def("nleep", &nleep, py::arg("probe"), py::arg("variance_fraction") = 0.8, py::arg("components") = 0,
        py::arg("seed") = 0);
  m.def("logme", &logme, py::arg("probe"));
  m.def("gbc", &gbc, py::arg("probe"), py::arg("pca_dims") = 64);
  m.def(
      "score",
      [](const ProbeSet& probe, const std::string& scorer, std::uint64_t seed, bool standardize,
         double nleep_variance_fraction, int gbc_pca_dims) {
        ScorerOptions o;
        o.seed = seed;
        o.standardize = standardize;
        o.nleep_variance_fraction = nleep_variance_fraction;
        o.gbc_pca_dims = gbc_pca_dims;
        return compute_score(scorer_from(scorer), probe, o);
      },
      py::arg("probe"), py::arg("scorer"), py::arg("seed") = 0, py::arg("standardize") = false,
      py::arg("nleep_variance_fraction") = 0.8, py::arg("gbc_pca_dims") = 64);

  py::class_<ScoreTable>(m, "ScoreTable")
      .def(py::init<std::string, std::string>(), py::arg("task"), py::arg("split"))
      .def_property_readonly("task", &ScoreTable::task)
      .def_property_readonly("split", &ScoreTable::split)
      .def_property_readonly("kind", [](const ScoreTable& t) { return std::string(to_string(t.kind())); })
      .def_property_readonly("checkpoints", &ScoreTable::checkpoints)
      .def_property_readonly("scorers",
                             [](const ScoreTable& t) {
                               std::vector<std::string> names;
                               for (auto s : t.scorers()) names.emplace_back(to_string(s));
                               return names;
                             })
      .def(
          "set",
          [](ScoreTable& t, const std::string& checkpoint, const std::string& scorer, double value) {
            t.set(checkpoint, scorer_from(scorer), value);
          },
          py::arg("checkpoint"), py::arg("scorer"), py::arg("value"))
      .def(
          "get",
          [](const ScoreTable& t, const std::string& checkpoint, const std::string& scorer) {
            return t.get(checkpoint, scorer_from(scorer));
          },
          py::arg("checkpoint"), py::arg("scorer"))
      .def("__len__", &ScoreTable::entry_count)
      .def("__eq__", [](const ScoreTable& a, const ScoreTable& b) { return a == b; })
      .def("to_json", [](const ScoreTable& t) { return score_table_to_json(t); })
      .def("to_dict", &table_dict)
      .def_static("from_json", [](const std::string& text) { return score_table_from_json(text); }, py::arg("text"))
      .def_static("load", [](const std::filesystem::path& p) { return load_score_table(p); }, py::arg("path"));

  m.def(
      "score_all",
      [](const TaskManifest& manifest, const std::string& split, const py::object& scorers, std::uint64_t seed,
         bool standardize, unsigned threads) {
        const auto ids = scorers_from(scorers);
        ScoreAllOptions o;
        o.scorer.seed = seed;
        o.scorer.standardize = standardize;
        o.threads = threads;
        py::gil_scoped_release release;
        return score_all(manifest, split, ids, o);
      },
      py::arg("manifest"), py::arg("split"), py::arg("scorers") = "all", py::arg("seed") = 0,
      py::arg("standardize") = false, py::arg("threads") = 1);

  // evaluation

  m.def("balanced_accuracy",
        [](const py::array& truth, const py::array& predicted, int class_count) {
          return balanced_accuracy(labels_from(truth), labels_from(predicted), class_count);
        },
        py::arg("truth"), py::arg("predicted"), py::arg("class_count"));
  m.def(
      "kendall_tau",
      [](const std::vector<double>& s, const std::vector<double>& p) { return kendall_tau(s, p); },
      py::arg("scores"), py::arg("performances"), "Kendall tau-b; None when either input is constant.");
  m.def(
      "weighted_kendall_tau",
      [](const std::vector<double>& s, const std::vector<double>& p) { return weighted_kendall_tau(s, p); },
      py::arg("scores"), py::arg("performances"));
  m.def(
      "importance_ranks", [](const std::vector<double>& p) { return importance_ranks(p); }, py::arg("performances"));
  m.def(
      "rank_checkpoints",
      [](const ScoreTable& t, const std::string& scorer) { return rank_checkpoints(t, scorer_from(scorer)); },
      py::arg("table"), py::arg("scorer"));
  m.def(
      "correlate",
      [](const ScoreTable& t, const TaskManifest& manifest, const std::string& split, const std::string& method) {
        return report_dict(correlate(t, manifest, split, parse_correlation_method(method)));
      },
      py::arg("table"), py::arg("manifest"), py::arg("split"), py::arg("method") = "wtau");
  m.def(
      "plot_data_csv",
      [](const ScoreTable& t, const TaskManifest& manifest, const std::string& split) {
        return plot_data_csv(t, manifest, split);
      },
      py::arg("table"), py::arg("manifest"), py::arg("split"));

  // hpo plan

  m.def("halton", &halton, py::arg("index"), py::arg("base"));
  m.def(
      "plan",
      [](int count, std::pair<double, double> lr, std::pair<double, double> wd, int skip) {
        py::list out;
        for (const auto& c : plan(plan_options(count, lr, wd, skip))) out.append(config_dict(c));
        return out;
      },
      py::arg("count") = 75, py::arg("learning_rate") = std::pair{1e-4, 1e-1},
      py::arg("weight_decay") = std::pair{1e-6, 1e-4}, py::arg("skip") = 20);
  m.def(
      "write_plan",
      [](const std::filesystem::path& dir, int count, std::pair<double, double> lr, std::pair<double, double> wd,
         int skip) {
        const auto o = plan_options(count, lr, wd, skip);
        write_plan(plan(o), o, dir);
      },
      py::arg("directory"), py::arg("count") = 75, py::arg("learning_rate") = std::pair{1e-4, 1e-1},
      py::arg("weight_decay") = std::pair{1e-6, 1e-4}, py::arg("skip") = 20);

  // synthetic data and cli

  m.def(
      "make_synthetic_task",
      [](const std::filesystem::path& dir, std::vector<double> separations, int classes, int samples_per_class,
         int dim, int source_classes, std::uint64_t seed) {
        synthetic::TaskSpec spec;
        spec.separations = std::move(separations);
        spec.classes = classes;
        spec.samples_per_class = samples_per_class;
        spec.dim = dim;
        spec.source_classes = source_classes;
        spec.seed = seed;
        return synthetic::write_task(spec, dir);
      },
      py::arg("directory"), py::arg("separations") = std::vector<double>{3.0, 2.0, 1.0}, py::arg("classes") = 3,
      py::arg("samples_per_class") = 60, py::arg("dim") = 8, py::arg("source_classes") = 10, py::arg("seed") = 0,
      "Write a synthetic task and return its manifest path.");
  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(std::move(args), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run one command line; returns (exit_code, stdout, stderr).");
}
