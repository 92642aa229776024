"""Brute-force reference computations. Deliberately loop-based and independent of hetsim."""


def prefix_sums_naive(img):
    rows, cols = len(img), len(img[0])
    out = [[0] * cols for _ in range(rows)]
    for r in range(rows):
        for c in range(cols):
            out[r][c] = sum(int(img[i][j]) for i in range(r + 1) for j in range(c + 1))
    return out


def prefix_sums(img):
    """Same result as prefix_sums_naive via running row sums; fast enough for 64x64."""
    rows, cols = len(img), len(img[0])
    out = [[0] * cols for _ in range(rows)]
    for r in range(rows):
        run = 0
        for c in range(cols):
            run += int(img[r][c])
            out[r][c] = run + (out[r - 1][c] if r else 0)
    return out


def rect_sum(img, row, col, height, width):
    rows, cols = len(img), len(img[0])
    total = 0
    for r in range(row, row + height):
        for c in range(col, col + width):
            if 0 <= r < rows and 0 <= c < cols:
                total += int(img[r][c])
    return total


def strict_maxima(volume, borders, threshold):
    """[(row, col, layer)] of points strictly above all 26 neighbors and threshold.

    volume[k][r][c]; borders[k] is the edge exclusion of interior layer k.
    """
    n, rows, cols = len(volume), len(volume[0]), len(volume[0][0])
    found = []
    for r in range(rows):
        for c in range(cols):
            for k in range(1, n - 1):
                b = borders[k]
                if r < b or c < b or r >= rows - b or c >= cols - b:
                    continue
                v = volume[k][r][c]
                if not v > threshold:
                    continue
                is_max = True
                for dk in (-1, 0, 1):
                    for dr in (-1, 0, 1):
                        for dc in (-1, 0, 1):
                            if (dk, dr, dc) == (0, 0, 0):
                                continue
                            if not v > volume[k + dk][r + dr][c + dc]:
                                is_max = False
                                break
                        if not is_max:
                            break
                    if not is_max:
                        break
                if is_max:
                    found.append((r, c, k))
    return found
