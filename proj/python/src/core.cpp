// Python bindings: oracles, statistics, synthesis, checkpoints and the CLI.

#include "mtq/audio_io.hpp"
#include "mtq/checkpoint.hpp"
#include "mtq/cli.hpp"
#include "mtq/corpus.hpp"
#include "mtq/errors.hpp"
#include "mtq/loss.hpp"
#include "mtq/model.hpp"
#include "mtq/oracle.hpp"
#include "mtq/stats.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <sstream>

namespace py = pybind11;
using namespace mtq;

namespace {

using Samples = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Samples& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

dsp::Waveform to_wave(const Samples& a, int fs) { return {to_vector(a), fs}; }

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

oracle::PairedUtterance pair(const Samples& clean, const Samples& degraded, int fs) {
  return oracle::PairedUtterance::make(to_wave(clean, fs), to_wave(degraded, fs));
}

py::dict scores_dict(const PrimaryScores& s) {
  py::dict d;
  d["smos"] = s.smos;
  d["nmos"] = s.nmos;
  d["gmos"] = s.gmos;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the mtq speech-quality toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<InputTooShortError>(m, "InputTooShortError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("SAMPLE_RATE") = dsp::kSampleRate;

  // Oracle metrics on a clean/degraded pair.
  m.def("stoi", [](const Samples& c, const Samples& d, int fs) { return oracle::stoi(pair(c, d, fs)); },
        py::arg("clean"), py::arg("degraded"), py::arg("fs") = dsp::kSampleRate);
  m.def("sdi", [](const Samples& c, const Samples& d, int fs) { return oracle::sdi(pair(c, d, fs)); },
        py::arg("clean"), py::arg("degraded"), py::arg("fs") = dsp::kSampleRate);
  m.def("pq_proxy", [](const Samples& c, const Samples& d, int fs) { return oracle::pq_proxy(pair(c, d, fs)); },
        py::arg("clean"), py::arg("degraded"), py::arg("fs") = dsp::kSampleRate);
  m.def("resample_poly", [](const Samples& x, int up, int down) {
    const auto v = to_vector(x);
    return to_array(oracle::resample_poly(v, up, down));
  }, py::arg("x"), py::arg("up"), py::arg("down"));

  // Evaluation statistics.
  m.def("lcc", [](const std::vector<double>& p, const std::vector<double>& t) { return stats::lcc(p, t); });
  m.def("srcc", [](const std::vector<double>& p, const std::vector<double>& t) { return stats::srcc(p, t); });
  m.def("mse", [](const std::vector<double>& p, const std::vector<double>& t) { return stats::mse(p, t); });
  m.def("average_ranks", [](const std::vector<double>& x) { return stats::average_ranks(x); });

  m.def("huber", &train::huber, py::arg("error"), py::arg("delta"));
  m.def("huber_derivative", &train::huber_derivative, py::arg("error"), py::arg("delta"));

  // Synthetic corpus pieces.
  m.def("synth_clean", [](double duration_s, std::uint64_t seed) {
    return to_array(corpus::synth_clean(duration_s, seed).samples);
  }, py::arg("duration_s"), py::arg("seed"));
  m.def("degrade", [](const Samples& clean, const std::string& noise, double snr_db,
                      const std::string& enhancer, std::uint64_t seed) {
    const auto y = corpus::degrade(to_wave(clean, dsp::kSampleRate), corpus::noise_from_name(noise), snr_db,
                                   corpus::enhancer_from_name(enhancer), seed);
    return to_array(y.samples);
  }, py::arg("clean"), py::arg("noise"), py::arg("snr_db"), py::arg("enhancer") = "none", py::arg("seed") = 0);
  m.def("proxy_truth", [](const Samples& c, const Samples& d) {
    return corpus::assign_proxy_truth(to_wave(c, dsp::kSampleRate), to_wave(d, dsp::kSampleRate));
  }, py::arg("clean"), py::arg("degraded"));

  m.def("read_wav", [](const std::filesystem::path& p) { return to_array(io::read_wav(p).samples); });
  m.def("write_wav", [](const std::filesystem::path& p, const Samples& x) {
    io::write_wav(p, to_wave(x, dsp::kSampleRate));
  });

  m.def("file_digest", &file_digest);

  py::class_<MtqNet>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"))
      .def("save", [](const MtqNet& net, const std::filesystem::path& p) { save_model(p, net); })
      .def("predict", [](const MtqNet& net, const Samples& x) {
        return scores_dict(predict(net, to_wave(x, dsp::kSampleRate)));
      }, py::arg("samples"))
      .def("predict_file", [](const MtqNet& net, const std::filesystem::path& wav,
                              std::optional<std::filesystem::path> emb) {
        return scores_dict(predict(net, io::read_wav(wav), emb));
      }, py::arg("wav"), py::arg("emb") = py::none())
      .def_property_readonly("config", [](const MtqNet& net) { return net.config().to_json().dump(); })
      .def_property_readonly("num_parameters", [](const MtqNet& net) {
        std::size_t n = 0;
        for (const auto& p : net.params()) n += p.value.size();
        return n;
      });

  // Runs the command-line tool in-process; returns (exit_code, stdout, stderr).
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
