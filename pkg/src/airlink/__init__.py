"""airlink: analog wireless delivery of compact neural networks.

Modules
-------
nn
    Dense networks, exact gradients, momentum SGD, structured pruning.
channel
    Power normalisation, AWGN and block-Rayleigh channels, equalisation.
codec
    Direct, repetition and spiral (SK) parameter codecs.
sensitivity
    Loss- and Hessian-based layer sensitivity, unequal expansion allocator.
pipeline
    Noise-injection, pruning, variable-SNR and interpolation training.
digital
    Capacity-bound separation baseline with outage modelling.
experiments
    Cached parameter sweeps and curve export (``airlink sweep``).

The spiral decoder runs in a compiled extension when available;
``airlink.kernels.BACKEND`` reports which implementation is active.
"""

__version__ = "0.1.0"
