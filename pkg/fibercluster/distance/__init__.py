# 纤维距离（MDF）
