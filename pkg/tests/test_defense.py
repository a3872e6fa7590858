import pytest
import torch

from style_cloak import metrics
from style_cloak.attack import AttackConfig, run_sita
from style_cloak.defense import DefenseSpec, apply_defense, default_specs, evaluate_robustness
from style_cloak.errors import InvalidParameterError


@pytest.fixture(scope="module")
def protected(artwork):
    from style_cloak.encoder import load_encoder

    enc = load_encoder("toy")
    res = run_sita(artwork, AttackConfig(encoder="toy", steps=10), enc)
    return artwork, res.x_adv, enc


def test_spec_validation():
    with pytest.raises(InvalidParameterError):
        DefenseSpec("jpeg")
    with pytest.raises(InvalidParameterError):
        DefenseSpec("jpeg", quality=75, sigma=1.0)
    with pytest.raises(InvalidParameterError):
        DefenseSpec("jpeg", quality=0)
    with pytest.raises(InvalidParameterError):
        DefenseSpec("bit_depth", bits=9)
    with pytest.raises(InvalidParameterError):
        DefenseSpec("gaussian_noise", sigma=-0.1, seed=0)
    with pytest.raises(InvalidParameterError):
        DefenseSpec("median", quality=3)


def test_parse():
    assert DefenseSpec.parse("jpeg:75") == DefenseSpec("jpeg", quality=75)
    assert DefenseSpec.parse("blur") == DefenseSpec("gaussian_blur", sigma=1.0)
    assert DefenseSpec.parse("noise:0.05:9") == DefenseSpec("gaussian_noise", sigma=0.05, seed=9)
    assert DefenseSpec.parse("bits") == DefenseSpec("bit_depth", bits=5)
    with pytest.raises(InvalidParameterError):
        DefenseSpec.parse("jpeg:high")
    assert [s.kind for s in default_specs()] == ["jpeg", "gaussian_blur", "gaussian_noise", "bit_depth"]


def test_noise_zero_identity_and_determinism(artwork):
    assert torch.equal(apply_defense(artwork, DefenseSpec("gaussian_noise", sigma=0.0, seed=3)), artwork)
    spec = DefenseSpec("gaussian_noise", sigma=0.02, seed=3)
    assert torch.equal(apply_defense(artwork, spec), apply_defense(artwork, spec))


def test_bit_depth_fixed_point_and_idempotent(artwork):
    q8 = torch.floor(artwork * 255 + 0.5) / 255
    assert torch.equal(apply_defense(q8, DefenseSpec("bit_depth", bits=8)), q8)
    for bits in range(1, 9):
        spec = DefenseSpec("bit_depth", bits=bits)
        once = apply_defense(artwork, spec)
        assert torch.equal(apply_defense(once, spec), once)
        assert len(torch.unique(once)) <= 2**bits


def test_all_defenses_stay_in_range(artwork):
    for spec in default_specs() + [DefenseSpec("gaussian_noise", sigma=0.5, seed=1)]:
        out = apply_defense(artwork, spec)
        assert out.shape == artwork.shape
        assert float(out.min()) >= 0 and float(out.max()) <= 1


def test_jpeg_round_trip_fixture(artwork):
    out = apply_defense(artwork, DefenseSpec("jpeg", quality=75))
    p = metrics.psnr(out, artwork)
    # measured 27.90 dB on synthetic_artwork(0) with Pillow's libjpeg
    assert p == pytest.approx(27.90, abs=1.0)
    again = apply_defense(out, DefenseSpec("jpeg", quality=75))
    # second pass measured at 40.35 dB / MAE 0.0056: near-idempotent, far closer than the first pass
    assert metrics.psnr(again, out) >= 38.0
    assert metrics.mae(again, out) <= 0.008


def test_robustness_identity_and_empty(protected):
    x_s, x_adv, enc = protected
    empty = evaluate_robustness(x_s, x_adv, enc, [])
    assert empty.defenses == [] and -1 <= empty.destyle_cos_clean <= 1
    rep = evaluate_robustness(x_s, x_adv, enc, [DefenseSpec("gaussian_noise", sigma=0.0, seed=0)])
    assert rep.defenses[0].destyle_cos_defended == pytest.approx(rep.destyle_cos_clean, abs=1e-6)


def test_robustness_report_shape(protected):
    x_s, x_adv, enc = protected
    rep = evaluate_robustness(x_s, x_adv, enc, default_specs())
    d = rep.to_dict()
    assert len(d["defenses"]) == 4
    for item in d["defenses"]:
        assert -1 <= item["destyle_cos_defended"] <= 1
        assert set(item["report"]) == {"ssim", "psnr_db", "mae", "l2", "linf"}
    assert d["defenses"][0]["spec"] == {"kind": "jpeg", "quality": 75}


def test_jpeg_partially_restores_alignment(artwork):
    from style_cloak.encoder import load_encoder

    enc = load_encoder("toy")
    x_adv = run_sita(artwork, AttackConfig(encoder="toy"), enc).x_adv
    rep = evaluate_robustness(artwork, x_adv, enc, [DefenseSpec("jpeg", quality=75)])
    defended = rep.defenses[0].destyle_cos_defended
    # direction is the property; the values are a regression fixture from a pilot run
    assert defended > rep.destyle_cos_clean
    assert rep.destyle_cos_clean == pytest.approx(-0.43902286, abs=1e-4)
    assert defended == pytest.approx(-0.43139375, abs=1e-4)
