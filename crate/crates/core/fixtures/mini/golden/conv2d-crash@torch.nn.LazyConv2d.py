# case: conv2d-crash@torch.nn.LazyConv2d
# fingerprint: fe66b1bb21e11ac4
# target: torch.nn.LazyConv2d (ported from conv2d-crash)
import torch
from bugport_runtime import _bugport_measure, _bugport_expect_status, _bugport_expect_value, _bugport_expect_performance

x = torch.randn(1, 512, 7, 7, device='cuda')
result = torch.nn.LazyConv2d(out_channels=2048, kernel_size=1, input=(1, 512, 7, 7))


_bugport_expect_status('RuntimeError', 'could not run <API> with <N> output channels')
