// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "lddr/bench.hpp"
#include "lddr/bridge.hpp"
#include "lddr/config.hpp"
#include "lddr/grammar.hpp"
#include "lddr/image.hpp"
#include "lddr/scene.hpp"
#include "lddr/trainer.hpp"

namespace py = pybind11;

namespace lddr {
namespace {

py::array_t<float> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(float));
  return out;
}

Tensor from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::memcpy(t.data(), a.data(), t.size() * sizeof(float));
  return t;
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

}  // namespace
}  // namespace lddr

PYBIND11_MODULE(_lddr, m) {
  using namespace lddr;
  namespace c = lddr::cli;
  m.doc() = "Ladder-bridged MLLM-to-DiT toy pipeline";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<VocabularyError>(m, "VocabularyError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<c::CommandError>(m, "CommandError", PyExc_RuntimeError);

  m.def(
      "train",
      [](const std::string& config, const std::string& resume, const std::string& out_dir, long stop_after,
         int validate_every) {
        c::TrainArgs a{config, resume, out_dir, stop_after, validate_every};
        nlohmann::json r;
        {
          py::gil_scoped_release nogil;
          r = c::cmd_train(a);
        }
        return to_python(r);
      },
      py::arg("config") = "", py::arg("resume") = "", py::arg("out_dir") = "run",
      py::arg("stop_after") = -1, py::arg("validate_every") = 0);

  m.def(
      "sample",
      [](const std::string& checkpoint, const std::string& prompt, std::optional<int> steps,
         std::optional<double> guidance, std::optional<std::uint64_t> seed, std::optional<std::string> bridge,
         const std::string& out) {
        c::SampleArgs a{checkpoint, prompt, steps, guidance, seed, bridge, out};
        Tensor img;
        {
          py::gil_scoped_release nogil;
          img = c::cmd_sample(a);
        }
        return to_numpy(img);
      },
      py::arg("checkpoint"), py::arg("prompt"), py::arg("steps") = py::none(),
      py::arg("guidance") = py::none(), py::arg("seed") = py::none(), py::arg("bridge") = py::none(),
      py::arg("out") = "sample.ppm");

  m.def(
      "edit",
      [](const std::string& checkpoint, const std::string& source, const std::string& instruction,
         std::optional<int> steps, std::optional<double> guidance, std::optional<std::uint64_t> seed,
         const std::string& out) {
        c::EditArgs a{checkpoint, source, instruction, steps, guidance, seed, out};
        Tensor img;
        {
          py::gil_scoped_release nogil;
          img = c::cmd_edit(a);
        }
        return to_numpy(img);
      },
      py::arg("checkpoint"), py::arg("source"), py::arg("instruction"), py::arg("steps") = py::none(),
      py::arg("guidance") = py::none(), py::arg("seed") = py::none(), py::arg("out") = "edit.ppm");

  m.def(
      "evaluate",
      [](const std::string& checkpoint, bool oracle, std::uint64_t suite_seed, std::optional<int> per_category,
         std::optional<int> steps, int grid, int img_side, const std::string& out) {
        c::EvalArgs a{checkpoint, oracle, suite_seed, per_category, steps, grid, img_side, out};
        nlohmann::json r;
        {
          py::gil_scoped_release nogil;
          r = c::cmd_eval(a);
        }
        return to_python(r);
      },
      py::arg("checkpoint") = "", py::arg("oracle") = false, py::arg("suite_seed") = 0,
      py::arg("per_category") = py::none(), py::arg("steps") = py::none(), py::arg("grid") = 2,
      py::arg("img_side") = 16, py::arg("out") = "");

  m.def(
      "ablate",
      [](const std::string& config, std::optional<std::uint64_t> seed, const std::string& out_dir,
         std::optional<int> per_category) {
        c::AblateArgs a{config, seed, out_dir, per_category};
        nlohmann::json r;
        {
          py::gil_scoped_release nogil;
          r = c::cmd_ablate(a);
        }
        return to_python(r);
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out_dir") = "ablate",
      py::arg("per_category") = py::none());

  m.def(
      "gen_data",
      [](const std::string& out_dir, int n, const std::string& kind, std::uint64_t seed, int grid, int img_side,
         bool recolor_only) {
        c::GenDataArgs a{out_dir, n, kind, seed, grid, img_side, recolor_only};
        py::gil_scoped_release nogil;
        c::cmd_gen_data(a);
      },
      py::arg("out_dir"), py::arg("n") = 100, py::arg("kind") = "t2i", py::arg("seed") = 0, py::arg("grid") = 2,
      py::arg("img_side") = 16, py::arg("recolor_only") = false);

  m.def(
      "grad_check",
      [](const std::string& config, std::uint64_t seed, std::size_t coords, double tol) {
        c::GradCheckArgs a{config, seed, coords, tol};
        nlohmann::json r;
        {
          py::gil_scoped_release nogil;
          r = c::cmd_grad_check(a);
        }
        return to_python(r);
      },
      py::arg("config") = "", py::arg("seed") = 0, py::arg("coords") = 16, py::arg("tol") = 1e-3);

  m.def("default_config", [] { return to_python(to_json(RunConfig{})); });
  m.def(
      "validate_config",
      [](const py::object& cfg) {
        try {
          return validate(run_config_from_json(from_python(cfg)));
        } catch (const ConfigError& e) {
          return e.problems();
        }
      },
      py::arg("config"));

  m.def(
      "tap_schedule",
      [](int mllm_layers, int dit_layers) {
        std::vector<std::pair<int, int>> out;
        for (const auto& p : tap_schedule(mllm_layers, dit_layers).pairs) out.emplace_back(p.dit_layer, p.mllm_layer);
        return out;
      },
      py::arg("mllm_layers"), py::arg("dit_layers"));

  m.def("lr_at", &lr_at, py::arg("step"), py::arg("total_steps"), py::arg("warmup"), py::arg("lr_max"),
        py::arg("lr_min"));

  m.def(
      "render_caption",
      [](const std::string& text, int grid, int img_side) {
        const TokenIds ids = Vocabulary::get().tokenize(text);
        const auto spec = scene_from_caption(ids, grid, img_side);
        if (!spec) throw c::CommandError("'" + text + "' does not describe a scene");
        return to_numpy(render(*spec));
      },
      py::arg("text"), py::arg("grid") = 2, py::arg("img_side") = 16);

  m.def(
      "parse_image",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& image, int grid) {
        ParseOptions opts;
        opts.grid = grid;
        const ParseResult r = parse_image(from_numpy(image), opts);
        py::dict d;
        d["ok"] = r.ok;
        d["reason"] = r.reason;
        d["caption"] = r.ok ? Vocabulary::get().detokenize(caption(r.spec)) : std::string();
        return d;
      },
      py::arg("image"), py::arg("grid") = 2);

  m.def(
      "read_ppm", [](const std::string& path) { return to_numpy(read_ppm(path)); }, py::arg("path"));
  m.def(
      "write_ppm",
      [](const std::string& path, const py::array_t<float, py::array::c_style | py::array::forcecast>& image) {
        write_ppm(path, from_numpy(image));
      },
      py::arg("path"), py::arg("image"));
}
