"""Small built-in model so the exporter can run without any checkpoint."""

import torch
from torch import nn


class ToyCNN(nn.Module):
    """Two stacked 3x3 convolutions with ReLU.

    Bias-free on purpose: the integer matmul downstream reconstructs
    x * w only, so a bias term would show up as model error rather
    than quantization error.
    """

    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 4, 3, padding=1, bias=False)
        self.conv2 = nn.Conv2d(4, 3, 3, bias=False)

    def forward(self, x):
        x = torch.relu(self.conv1(x))
        return torch.relu(self.conv2(x))


def build_demo(seed=0):
    torch.manual_seed(seed)
    return ToyCNN()


def make_samples(count, size=8, seed=0):
    """Non-negative N x 1 x size x size batch, as an unsigned
    activation pipeline expects at its first layer."""
    g = torch.Generator().manual_seed(seed)
    return torch.rand((count, 1, size, size), generator=g)
