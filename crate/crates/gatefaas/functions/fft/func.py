import numpy as np


def f(FER):
    spectrum = np.fft.fft(np.asarray(FER["x"]["block"], dtype=float))
    return {"re": spectrum.real.tolist(), "im": spectrum.imag.tolist()}
