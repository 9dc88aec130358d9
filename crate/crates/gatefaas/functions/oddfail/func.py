def f(FER):
    i = int(FER["x"]["i"])
    if i % 2:
        raise ValueError(f"odd input {i}")
    return {"i": i}
