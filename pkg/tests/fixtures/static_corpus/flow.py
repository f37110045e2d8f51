def label_kind() -> "List[str]":
    data: "List[int, str]" = [1, "x"]
    out: "List[str]" = []
    for item in data:
        if isinstance(item, str):
            out.append(item)
        elif isinstance(item, int):
            out.append("num")
    return out


def choose() -> int:
    chosen: int = 1 if True else 2
    return chosen


def log_nothing() -> None:
    message: str = "quiet"


def outer_scale() -> float:
    def inner():
        return 2.0

    factor: float = inner()
    sizer: "Callable" = lambda q: q
    return factor
