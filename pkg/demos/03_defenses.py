"""
Does the protection survive common preprocessing?
=================================================

Protect a synthetic painting, then run JPEG, blur, noise and bit-depth
reduction over it and see how far the destylization cosine climbs back.
"""
import json

import style_cloak as sc
from style_cloak.defense import default_specs
from style_cloak.samples import synthetic_artwork

enc = sc.load_encoder("toy")
x_s = synthetic_artwork(seed=7).float()
x_adv = sc.run_sita(x_s, sc.AttackConfig(encoder="toy"), enc).x_adv

specs = default_specs(seed=0) + [sc.DefenseSpec.parse("jpeg:50"), sc.DefenseSpec.parse("noise:0")]
rob = sc.evaluate_robustness(x_s, x_adv, enc, specs)

print("cosine without any defense:", round(rob.destyle_cos_clean, 4))
for out in rob.defenses:
    print(f"{json.dumps(out.spec.to_dict()):54s} cosine {out.destyle_cos_defended:+.4f}  psnr vs clean {out.report.psnr_db:6.2f}")

# quantizing twice is the same as quantizing once
q = sc.apply_defense(x_adv, sc.DefenseSpec("bit_depth", bits=5))
print("bit depth idempotent:", bool((sc.apply_defense(q, sc.DefenseSpec("bit_depth", bits=5)) == q).all()))
