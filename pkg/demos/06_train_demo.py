#!/usr/bin/env python3
"""End-to-end training of the tiny preset on synthetic two-class images.

The dataset is separable by construction (oriented gradients with a per-class
brightness offset), so a one-block-per-stage backbone reaches perfect train
accuracy within a few dozen optimizer steps. Equivalent CLI run:

    masa-kit train-demo --seed 7 --steps 60 --out metrics.csv
"""

from masa_kit import DataConfig, preset_config, train_loop

config = preset_config("tiny")
data = DataConfig(seed=7, n=64, resolution=32, num_classes=2)

print("training the tiny preset for 60 steps (batch 8, cosine learning rate)...")
metrics = train_loop(config, data, steps=60, seed=7, eval_interval=10)

print(f"{'step':>5} {'loss':>12} {'accuracy':>9}")
print(f"{metrics.initial.step:>5} {metrics.initial.loss:>12.6f} {metrics.initial.accuracy:>9.3f}")
for record in metrics.records:
    print(f"{record.step:>5} {record.loss:>12.6f} {record.accuracy:>9.3f}")

print()
print(f"final train accuracy: {metrics.final.accuracy:.3f}")
print("rerunning with the same seeds reproduces this table bit for bit.")
