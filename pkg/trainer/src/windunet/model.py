"""Fully-convolutional UNet for per-pixel wind-speed regression.

Four pool/unpool levels with feature widths ``base * 2**k`` (the full-size
configuration uses base=32, i.e. 32..512 filters; small desk runs shrink
``base``).  Every convolution is 3x3 except the single-filter 1x1 head,
all hidden activations are ReLU, and the head is ReLU-clamped so predicted
speeds are never negative.  There are no dense layers, so the parameter
count is independent of the input size and the net runs on any raster
whose sides are multiples of 16.
"""

import torch
from torch import nn

DEPTH = 4  # pooling levels; inputs must be divisible by 2**DEPTH


class _DoubleConv(nn.Module):
    """Two 3x3 same-padding convolutions, each followed by ReLU."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c_out, c_out, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    def __init__(self, in_channels: int, base: int = 32):
        super().__init__()
        if in_channels < 1:
            raise ValueError("need at least one input channel")
        widths = [base * 2 ** k for k in range(DEPTH + 1)]

        self.enc = nn.ModuleList()
        c_prev = in_channels
        for w in widths[:-1]:
            self.enc.append(_DoubleConv(c_prev, w))
            c_prev = w
        self.pool = nn.MaxPool2d(2)
        self.bottom = _DoubleConv(widths[-2], widths[-1])

        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for w in reversed(widths[:-1]):
            self.up.append(nn.ConvTranspose2d(w * 2, w, 2, stride=2))
            self.dec.append(_DoubleConv(w * 2, w))

        self.head = nn.Conv2d(base, 1, kernel_size=1)

    def forward(self, x):
        h, w = x.shape[-2:]
        step = 2 ** DEPTH
        if h % step or w % step:
            raise ValueError(f"input {h}x{w} not divisible by {step}; "
                             "pad first (predict.pad_to_grid does this)")
        skips = []
        for enc in self.enc:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottom(x)
        for up, dec, skip in zip(self.up, self.dec, reversed(skips)):
            x = up(x)
            x = dec(torch.cat([skip, x], dim=1))
        return torch.relu(self.head(x))
