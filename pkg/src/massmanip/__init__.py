"""Mass-conditioned two-hand object manipulation synthesis.

Library layout:
  numerics   tensor autodiff, layers, Adam, gradient checks, checkpoints
  handmodel  capsule-skinned two-hand model and sphere/mesh object geometry
  diffusion  DDPM schedules, forward/reverse processes, denoiser UNets
  trajdiff   object trajectory synthesis (reference-vertex rotations, Procrustes)
  handdiff   hand joint motion synthesis with geometric losses
  connet     per-vertex contact probability estimation
  fitopt     contact-aware hand fitting optimization
  retime     user-path resampling and mass-dependent retiming
  datagen    procedural mass-conditioned ground-truth generation
  metrics    plausibility, diversity, and acceleration-Wasserstein metrics
  persist    motion bundle container files
  service    HTTP API over a loaded model snapshot
  cli        command-line entry points
"""

__version__ = "0.1.0"
