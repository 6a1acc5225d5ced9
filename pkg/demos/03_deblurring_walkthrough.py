"""
Deblurring one field, end to end
================================

The full pipeline on a single instance: fit a mixture prior on synthetic
fields, blur a held-out field with a planted kernel, then run the guided
reverse process and watch the kernel, the guidance scale, and the reblur
loss evolve.  Finishes with the score that matters: CSI against the clean
field, before and after.
"""

import numpy as np

import postcast as pc

RAMP = " .:-=+*#%@"


def sketch(field, title):
    vals = np.clip(field.values, 0.0, 1.0)
    print(title)
    for row in vals[::4, ::2]:
        print("   " + "".join(RAMP[int(v * (len(RAMP) - 1))] for v in row))
    print()


# ---- an unconditional prior over sharp fields ----------------------------

spec = pc.FieldSpec(height=64, width=64, seed=42, cells_mean=7.0,
                    amplitude_range=(0.5, 0.95), sigma_range=(1.0, 3.0))
print("fitting a 16-component mixture prior on 300 synthetic fields...")
gmm = pc.fit_gmm_prior(pc.generate_fields(spec, 300), 16, seed=9)
print(f"done: {len(gmm.weights)} components, "
      f"largest weight {max(gmm.weights):.3f}")
print()

# ---- the problem instance ------------------------------------------------

held_out = pc.FieldSpec(height=64, width=64, seed=4242, cells_mean=7.0,
                        amplitude_range=(0.5, 0.95), sigma_range=(1.0, 3.0))
clean = pc.generate_fields(held_out, 1)[0]
pair = pc.plant_blur(clean, "mixed", 4)
sketch(clean, "clean field (the sampler never sees this):")
sketch(pair.blurry, "blurry input y' (this is all the sampler gets):")

# ---- guided reverse diffusion --------------------------------------------

# Same knobs the acceptance suite runs: 250 steps, a 9x9 kernel born
# near zero, and the auto-scaled guidance with its negative offset.
sch = pc.linear_schedule(250, 1e-4, 0.06)
cfg = pc.GuidanceConfig(lr=0.005, C=-220.0, s_max=3500.0)
kcfg = pc.KernelConfig(size=9, init_mean=0.006, init_std=0.002)

print("running 250 guided reverse steps...")
trace = pc.postcast_deblur(sch, gmm, pair.blurry, config=cfg, seed=0,
                           kernel_config=kcfg)
print(f"{'t':>5} {'reblur loss':>12} {'scale':>8} {'kernel mean':>12}")
for rec in trace.records:
    if rec.t in (250, 200, 150, 100, 50, 10, 1):
        print(f"{rec.t:5d} {rec.loss:12.2e} {rec.scale:8.1f} "
              f"{rec.kernel_mean:12.5f}")
print()

# The kernel starts near zero and grows mass as the clean estimate
# sharpens; the loss tells how faithfully (kernel . estimate) matches y'.
x_hat = trace.x0
sketch(x_hat, "deblurred output:")

# ---- did it help? ---------------------------------------------------------

tau = pc.quantile_threshold(clean, 0.99)
print(f"extreme-value threshold (q=0.99 of the clean field): {tau:.3f}")
print(f"{'pooling':>8} {'blurry CSI':>11} {'deblurred CSI':>14}")
for pool in (1, 4, 16):
    before = pc.csi(pair.blurry, clean, tau, pool).csi
    after = pc.csi(x_hat, clean, tau, pool).csi
    print(f"{pool:8d} {before:11.3f} {after:14.3f}")
print()
print("blur smears peaks below the extreme threshold, so the blurry input")
print("scores near zero; the deblurred field puts the exceedances back.")
