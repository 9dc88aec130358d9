import time


def f(FER):
    ms = max(int(FER["x"].get("ms", 0)), 0)
    time.sleep(ms / 1000)
    return {"slept_ms": ms}
