"""Room-acoustics matching toolkit.

Simulate shoebox room impulse responses, measure and blindly estimate
acoustic signatures (RT60, DRR), transfer a target space's signature onto
source audio, run the self-supervised acoustics-alteration pipeline, and
score results with spectrogram- and decay-based metrics.
"""

__version__ = "0.1.0"
