"""
End-to-end AUROC versus a linear probe
======================================

Train the same small network with and without DP-SGD, then ask how much
of the label information in its embeddings a freshly fitted linear probe
can recover. The difference is the utilization gap G.
"""

import numpy as np

from dprgmi import SynthConfig, generate
from dprgmi.dp_optimizer import PrivacySpec, TrainConfig, train_nonprivate, train_private
from dprgmi.evaluation import macro_auroc, probe_predict, train_probe, utilization_gap
from dprgmi.geometry import displacement, effective_dimension
from dprgmi.model import ModelConfig, embed_batch, init_params, pos_weights, predict_logits

train, test = generate(SynthConfig(n_samples=5000, feature_dim=32, n_labels=3,
                                   label_prevalence=(0.3, 0.2, 0.4), seed=7))
mc = ModelConfig(input_dim=32, n_labels=3, hidden_dim=64, embed_dim=16)
w = pos_weights(train.labels)
init = init_params(mc, 0)
cfg = TrainConfig(learning_rate=0.05, momentum=0.9, expected_batch=128, seed=0, weights=w)

models = {"inf": train_nonprivate(train, mc, init, cfg, 200)}
for eps in (8.0, 0.7):
    spec = PrivacySpec(eps, 1e-5, clip_norm=0.1, sample_rate=128 / train.n, steps=200).resolve()
    models[f"{eps:g}"], (spent, _) = train_private(train, mc, init, spec, cfg)
    print(f"eps={eps:g}: sigma={spec.noise_multiplier:.3f}, spent eps={spent:.3f}")

Z0 = embed_batch(init, test.features)
print(f"\n{'eps':>5} {'U_e2e':>7} {'U_probe':>8} {'G':>6} {'Delta':>7} {'d_eff':>6}")
for name, params in models.items():
    u_e2e, _ = macro_auroc(predict_logits(params, test.features), test.labels)
    probe = train_probe(embed_batch(params, train.features), train.labels, 1e-2, w)
    Z = embed_batch(params, test.features)
    u_probe, _ = macro_auroc(probe_predict(probe, Z), test.labels)
    G = utilization_gap(100 * u_probe, 100 * u_e2e)
    print(f"{name:>5} {100 * u_e2e:7.1f} {100 * u_probe:8.1f} {G:6.1f} "
          f"{displacement(Z, Z0):7.3f} {effective_dimension(Z):6.2f}")

# under privacy the head lags what the frozen embedding supports: G opens up
