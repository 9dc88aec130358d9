def f(FER):
    x = FER["x"]
    return {"q": int(x["a"]) // int(x["b"])}
