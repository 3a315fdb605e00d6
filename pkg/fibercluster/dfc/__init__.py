# 深度聚类（DEC 风格）
