"""Audio deepfake detection on stereo signals synthesized from mono input.

The pipeline converts a single-channel utterance to two-channel stereo with
a pretrained neural binauralizer, encodes the left and right channels with
independent graph-attention branches, fuses them, and classifies the trial
as bonafide or spoof.  Scoring is reported as equal error rate.
"""

__version__ = "0.1.0"
