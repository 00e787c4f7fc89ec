"""Stage I: image -> grasp-affordance segmentation.

A small skip-connected encoder-decoder trained with Dice loss on the
procedural dataset; outputs per-pixel probabilities, a 0.5-threshold mask,
and the mask's Euclidean distance transform for the policy.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import nncore as nn
from . import objgen
from .geom import distance_transform


@dataclass
class AffordanceOutput:
    probs: np.ndarray   # (64,64) in (0,1)
    mask: np.ndarray    # (64,64) uint8, probs > 0.5
    dt: np.ndarray      # (64,64) distance transform of mask, in cells


class AffordanceNet:
    """3-level conv encoder (16/32/64, stride 2) with mirrored
    upsample+conv decoder, skip connections, and a sigmoid 1x1 head."""

    def __init__(self, seed=0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.enc1 = nn.Conv2d(1, 16, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.enc2 = nn.Conv2d(16, 32, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.enc3 = nn.Conv2d(32, 64, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.dec1 = nn.Conv2d(64 + 32, 32, 3, stride=1, pad=1, rng=rng, dtype=dtype)
        self.dec2 = nn.Conv2d(32 + 16, 16, 3, stride=1, pad=1, rng=rng, dtype=dtype)
        self.dec3 = nn.Conv2d(16 + 1, 16, 3, stride=1, pad=1, rng=rng, dtype=dtype)
        self.head = nn.Conv2d(16, 1, 1, stride=1, pad=0, rng=rng, dtype=dtype)

    def layers(self):
        return [("enc1", self.enc1), ("enc2", self.enc2), ("enc3", self.enc3),
                ("dec1", self.dec1), ("dec2", self.dec2), ("dec3", self.dec3),
                ("head", self.head)]

    def parameters(self):
        return [p for _, layer in self.layers() for _, p in layer.params()]

    def named_arrays(self):
        return {f"{ln}.{pn}": p.data for ln, layer in self.layers() for pn, p in layer.params()}

    def load_arrays(self, arrays):
        for ln, layer in self.layers():
            for pn, p in layer.params():
                key = f"{ln}.{pn}"
                if key not in arrays:
                    raise ValueError(f"checkpoint is missing parameter {key}")
                if arrays[key].shape != p.data.shape:
                    raise ValueError(f"checkpoint shape mismatch for {key}: "
                                     f"{arrays[key].shape} vs {p.data.shape}")
                p.data[...] = arrays[key].astype(p.data.dtype)

    def forward(self, x: nn.Tensor) -> nn.Tensor:
        e1 = nn.relu(self.enc1(x))                      # 16 x 32x32
        e2 = nn.relu(self.enc2(e1))                     # 32 x 16x16
        e3 = nn.relu(self.enc3(e2))                     # 64 x 8x8
        d1 = nn.relu(self.dec1(nn.concat([nn.upsample2(e3), e2], axis=1)))
        d2 = nn.relu(self.dec2(nn.concat([nn.upsample2(d1), e1], axis=1)))
        d3 = nn.relu(self.dec3(nn.concat([nn.upsample2(d2), x], axis=1)))
        return nn.sigmoid(self.head(d3))

    def save(self, path):
        nn.save_checkpoint(path, self.named_arrays())

    @classmethod
    def load(cls, path):
        net = cls(seed=0)
        net.load_arrays(nn.load_checkpoint(path))
        return net


def predict(net: AffordanceNet, image) -> AffordanceOutput:
    """Deterministic forward pass on one 64x64 image."""
    img = np.asarray(image, dtype=np.float32)
    if img.shape != (64, 64):
        raise ValueError(f"expected a 64x64 image, got {img.shape}")
    probs = net.forward(nn.Tensor(img[None, None])).data[0, 0]
    mask = (probs > 0.5).astype(np.uint8)
    return AffordanceOutput(probs=probs, mask=mask, dt=distance_transform(mask))


def iou(pred_mask, gt_mask):
    """Intersection over union; two empty masks count as a perfect match."""
    a = np.asarray(pred_mask) != 0
    b = np.asarray(gt_mask) != 0
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def load_split(root, split):
    """Dataset split as (images[N,1,64,64], masks[N,1,64,64]) float32."""
    recs = [r for r in objgen.load_manifest(root) if r["split"] == split]
    if not recs:
        raise ValueError(f"dataset at {root} has no '{split}' split")
    imgs = np.stack([objgen.load_grid(os.path.join(root, r["image"])) for r in recs])
    msks = np.stack([objgen.load_grid(os.path.join(root, r["mask"])) for r in recs])
    return imgs[:, None].astype(np.float32), (msks[:, None] > 0.5).astype(np.float32)


def train_afford(dataset_root, epochs=20, lr=1e-4, batch=8, seed=0, csv_path=None,
                 arrays=None, max_steps=None):
    """Dice-loss training; returns (best-val-IoU net, per-epoch metrics).

    `arrays` may supply preloaded ((xtr, ytr), (xva, yva)) tensors instead of
    a dataset directory (used by the single-pair overfit check).
    """
    if arrays is not None:
        (xtr, ytr), (xva, yva) = arrays
    else:
        xtr, ytr = load_split(dataset_root, "train")
        xva, yva = load_split(dataset_root, "val")
    net = AffordanceNet(seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(17,)))
    params = net.parameters()
    metrics = []
    best_iou, best_arrays = -1.0, None
    steps = 0
    for epoch in range(epochs):
        order = rng.permutation(len(xtr))
        losses = []
        for i in range(0, len(order), batch):
            idx = order[i:i + batch]
            pred = net.forward(nn.Tensor(xtr[idx]))
            loss = nn.dice_loss(pred, ytr[idx])
            loss.backward()
            nn.adam_step(params, lr=lr)
            losses.append(float(loss.data))
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        val_iou = float(np.mean([
            iou(net.forward(nn.Tensor(xva[j:j + 16])).data[b, 0] > 0.5, yva[j + b, 0])
            for j in range(0, len(xva), 16)
            for b in range(min(16, len(xva) - j))
        ]))
        metrics.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_iou": val_iou})
        if val_iou > best_iou:
            best_iou = val_iou
            best_arrays = {k: v.copy() for k, v in net.named_arrays().items()}
        if max_steps is not None and steps >= max_steps:
            break
    if best_arrays is not None:
        net.load_arrays(best_arrays)
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write("epoch,train_loss,val_iou\n")
            for m in metrics:
                fh.write(f"{m['epoch']},{m['train_loss']:.6f},{m['val_iou']:.6f}\n")
    return net, metrics


def eval_iou(net, root, split="test"):
    """Mean IoU of thresholded predictions over a dataset split."""
    xs, ys = load_split(root, split)
    vals = []
    for j in range(0, len(xs), 16):
        probs = net.forward(nn.Tensor(xs[j:j + 16])).data
        for b in range(probs.shape[0]):
            vals.append(iou(probs[b, 0] > 0.5, ys[j + b, 0]))
    return float(np.mean(vals))
