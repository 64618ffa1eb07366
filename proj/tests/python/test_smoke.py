# Copyright 2026 The LDDR Authors
# SPDX-License-Identifier: Apache-2.0

import json

import numpy as np
import pytest

import lddr


def stage(name, edit_fraction):
    return {
        "name": name,
        "dataset": "synthetic",
        "batch_size": 2,
        "steps": 3,
        "warmup": 1,
        "lr_max": 1e-3,
        "lr_min": 1e-4,
        "edit_fraction": edit_fraction,
        "recolor_only": False,
    }


def tiny_config():
    cfg = lddr.default_config()
    cfg["mllm"].update(layers=4, width=32, heads=2, mlp_hidden=64, pretrain_steps=5, pretrain_batch=4)
    cfg["dit"].update(layers=2, width=32, heads=2, mlp_hidden=64, t_embed_dim=32)
    cfg["bridge"]["queries"] = 4
    cfg["stages"] = [
        stage(name, edit_fraction)
        for name, edit_fraction in [("t2i_pretrain", 0.0), ("ti2i_pretrain", 1.0), ("finetune", 0.5)]
    ]
    cfg["sampler"]["steps"] = 2
    cfg["bench"]["prompts_per_category"] = 1
    return cfg


def test_tap_schedule_and_lr():
    assert lddr.tap_schedule(8, 4) == [(1, 5), (2, 6), (3, 7), (4, 8)]
    with pytest.raises(lddr.ConfigError):
        lddr.tap_schedule(2, 4)
    assert lddr.lr_at(77500, 150000, 5000, 1e-4, 1e-5) == pytest.approx(5.5e-5, abs=1e-15)


def test_config_validation_reports_every_problem():
    assert lddr.validate_config(lddr.default_config()) == []
    cfg = tiny_config()
    cfg["mllm"]["layers"] = 1
    cfg["stages"][0]["steps"] = 0
    assert len(lddr.validate_config(cfg)) >= 2


def test_render_parse_round_trip(tmp_path):
    img = lddr.render_caption("a red circle above a blue square")
    assert img.shape == (16, 16, 3)
    assert img.min() >= -1.0 and img.max() <= 1.0
    parsed = lddr.parse_image(img)
    assert parsed["ok"]
    assert parsed["caption"] == "a red circle above a blue square"
    path = str(tmp_path / "x.ppm")
    lddr.write_ppm(path, img)
    np.testing.assert_array_equal(lddr.read_ppm(path), img)
    with pytest.raises(lddr.VocabularyError):
        lddr.render_caption("a red hexagon")


def test_oracle_benchmark_is_perfect():
    report = lddr.evaluate(oracle=True, suite_seed=1, per_category=2)
    assert report["scores"]["overall"] == 1.0
    assert len(report["per_prompt"]) == 12


def test_grad_check_passes():
    report = lddr.grad_check(seed=3, coords=4)
    assert report["passed"]
    assert report["max_rel_error"] < 1e-3


def test_train_sample_edit(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_config()))
    out = lddr.train(config=str(cfg_path), out_dir=str(tmp_path / "run"))
    assert out["completed"]
    assert len(out["checkpoints"]) == 3
    ckpt = out["checkpoints"][-1]

    a = lddr.sample(ckpt, "a green triangle", seed=5, out=str(tmp_path / "a.ppm"))
    b = lddr.sample(ckpt, "a green triangle", seed=5, out=str(tmp_path / "b.ppm"))
    assert a.shape == (16, 16, 3)
    np.testing.assert_array_equal(a, b)
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()
    with pytest.raises(lddr.VocabularyError):
        lddr.sample(ckpt, "a green hexagon", out=str(tmp_path / "c.ppm"))
    with pytest.raises(lddr.CommandError):
        lddr.sample(ckpt, "a green triangle", bridge="final_layer_only", out=str(tmp_path / "c.ppm"))

    src = str(tmp_path / "src.ppm")
    lddr.write_ppm(src, lddr.render_caption("a red circle"))
    edited = lddr.edit(ckpt, src, "make the red circle blue", out=str(tmp_path / "e.ppm"))
    assert edited.shape == (16, 16, 3)
    with pytest.raises(lddr.CommandError):
        lddr.edit(ckpt, src, "", out=str(tmp_path / "e.ppm"))


def test_missing_checkpoint_raises(tmp_path):
    with pytest.raises(lddr.CheckpointError):
        lddr.sample(str(tmp_path / "nope.ckpt"), "a red circle")


def test_gen_data(tmp_path):
    lddr.gen_data(str(tmp_path / "d"), n=3, kind="edit", seed=2)
    lines = (tmp_path / "d" / "index.jsonl").read_text().splitlines()
    assert len(lines) == 3
