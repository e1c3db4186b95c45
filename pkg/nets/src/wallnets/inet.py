"""Imaging network: encoder-decoder that focuses raw scan matrices into depth images.

The decoder stacks three feature paths per level (peer-level skip connection,
up-convolution, plain upsampling) and refines them with residual blocks; a
final residual block plus convolution emits a one-channel image matching the
input's spatial size, so the network replaces parameter-dependent migration
without being told wall permittivity or probe speed.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class INetConfig:
    levels: int = 4
    base_channels: int = 16
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0


class ResidualBlock(nn.Module):
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=1, padding=1)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1)
        self.proj = (
            nn.Identity()
            if in_channels == out_channels
            else nn.Conv2d(in_channels, out_channels, 1)
        )

    def forward(self, x):
        h = F.relu(self.conv1(x))
        h = self.conv2(h)
        return F.relu(h + self.proj(x))


class DecoderLevel(nn.Module):
    """One decoder stage: skip + up-convolution + upsampling, then refinement."""

    def __init__(self, prev_channels, skip_channels, out_channels):
        super().__init__()
        self.upconv = nn.Conv2d(prev_channels, prev_channels // 2, 3, stride=1, padding=1)
        self.refine = ResidualBlock(
            prev_channels // 2 + prev_channels + skip_channels, out_channels
        )

    def forward(self, prev, skip):
        up = F.interpolate(prev, scale_factor=2, mode="nearest")
        upconv = F.relu(self.upconv(up))
        stacked = torch.cat([skip, upconv, up], dim=1)
        return self.refine(stacked)


class INet(nn.Module):
    def __init__(self, cfg: INetConfig = INetConfig()):
        super().__init__()
        self.cfg = cfg
        chans = [cfg.base_channels * 2**i for i in range(cfg.levels + 1)]
        self.stem = nn.Conv2d(1, chans[0], 3, stride=1, padding=1)
        self.encoder = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 3, stride=1, padding=1)
            for i in range(cfg.levels)
        )
        self.decoder = nn.ModuleList(
            DecoderLevel(chans[i + 1], chans[i], chans[i])
            for i in reversed(range(cfg.levels))
        )
        self.head_block = ResidualBlock(chans[0], chans[0])
        self.head = nn.Conv2d(chans[0], 1, 3, stride=1, padding=1)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.xavier_uniform_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError("expected input of shape (batch, 1, rows, cols)")
        h, w = x.shape[-2:]
        mult = 2**self.cfg.levels
        pad_h = (mult - h % mult) % mult
        pad_w = (mult - w % mult) % mult
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")

        feat = F.relu(self.stem(x))
        skips = [feat]
        for conv in self.encoder:
            feat = F.relu(conv(F.max_pool2d(feat, 2)))
            skips.append(feat)

        out = skips[-1]
        for level, dec in enumerate(self.decoder):
            out = dec(out, skips[-2 - level])
        out = self.head(self.head_block(out))
        return out[..., :h, :w]


def train_inet(
    model: INet,
    train_set,
    val_set=None,
    cfg: INetConfig | None = None,
    checkpoint_path=None,
    log_path=None,
):
    """SGD/L1 training loop; returns per-epoch train (and val) loss history.

    Deterministic for a fixed cfg.seed: batch order comes from a dedicated
    generator. When a checkpoint path is given, the best-validation weights
    are saved there along with a JSON metrics log next to it.
    """
    cfg = cfg or model.cfg
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    torch.manual_seed(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    loader = torch.utils.data.DataLoader(
        train_set, batch_size=cfg.batch_size, shuffle=True, generator=generator
    )
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    loss_fn = nn.L1Loss()

    history = {"train_loss": [], "val_loss": []}
    best_val = math.inf
    for _ in range(cfg.epochs):
        model.train()
        total = 0.0
        count = 0
        for x, y, _ in loader:
            optimizer.zero_grad()
            loss = loss_fn(model(x), y)
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * x.shape[0]
            count += x.shape[0]
        history["train_loss"].append(total / count)

        if val_set is not None and len(val_set) > 0:
            val = evaluate_l1(model, val_set, batch_size=cfg.batch_size)
            history["val_loss"].append(val)
            if val < best_val:
                best_val = val
                if checkpoint_path is not None:
                    torch.save(model.state_dict(), checkpoint_path)
    if checkpoint_path is not None and val_set is None:
        torch.save(model.state_dict(), checkpoint_path)
    if log_path is not None:
        Path(log_path).write_text(json.dumps(history, indent=2), encoding="utf-8")
    return history


@torch.no_grad()
def evaluate_l1(model: INet, dataset, batch_size: int = 64) -> float:
    model.eval()
    loader = torch.utils.data.DataLoader(dataset, batch_size=batch_size, shuffle=False)
    loss_fn = nn.L1Loss(reduction="sum")
    total = 0.0
    count = 0
    for x, y, _ in loader:
        total += float(loss_fn(model(x), y))
        count += y.numel()
    return total / count


@torch.no_grad()
def predict_image(model: INet, matrix: torch.Tensor) -> torch.Tensor:
    """Single-matrix inference: (rows, cols) in, (rows, cols) out."""
    model.eval()
    return model(matrix.unsqueeze(0).unsqueeze(0))[0, 0]


def denormalize(image: torch.Tensor, params: dict) -> torch.Tensor:
    """Invert the dataset's affine target normalization, clamping at zero.

    Focused images are magnitudes, so the inverse transform clips negative
    excursions introduced by the network.
    """
    scale = params["pre_std"] / params["std"] if params["std"] else 0.0
    raw = (image - params["mean"]) * scale + params["pre_mean"]
    return torch.clamp(raw, min=0.0)
