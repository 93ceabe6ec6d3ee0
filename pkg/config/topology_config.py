"""
网络拓扑配置
Series / Star 两种拓扑共用同一条路由器链，区别在于服务器与客户端的接入方式
带宽单位 bit/s，时延单位秒
"""

# 路由器之间的链路
ROUTER_LINK = {"bandwidth": 10e6, "delay": 0.006}

# 客户端（读者/写者）接入路由器
CLIENT_LINK = {"bandwidth": 5e6, "delay": 0.004}

# 服务器接入路由器
SERVER_LINKS = {
    "series": {"bandwidth": 10e6, "delay": 0.002},  # 每个路由器挂一台服务器
    "star": {"bandwidth": 50e6, "delay": 0.002},    # 全部服务器挂在同一路由器上（数据中心）
}

# Star 拓扑中服务器所在的路由器
STAR_HUB_ROUTER = 0

TOPOLOGY_KINDS = ("series", "star")
