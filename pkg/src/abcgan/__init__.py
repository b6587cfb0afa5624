"""Likelihood-free inference with ABC-GAN: a generator, a differentiable
approximator of the simulator, a learned summarizer and a decoder, trained
with MMD losses against black-box simulators."""

__version__ = "0.1.0"
