class Counter:
    def __init__(self):
        self.total = 0

    def bump(self) -> int:
        self.total = self.total + 1
        return self.total


def fresh_counter() -> "Counter":
    made: "Counter" = Counter()
    return made


def base_width() -> int:
    return 4


def doubled_width() -> int:
    return base_width() * 2


def _scale(value: int) -> int:
    return value * 2


def scale_all() -> int:
    return _scale(3)


def count_items() -> int:
    return len([1, 2])


def shout() -> str:
    base: str = "hey"
    return base.upper()
